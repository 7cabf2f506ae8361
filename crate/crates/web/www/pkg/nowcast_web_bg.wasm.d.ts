/* tslint:disable */
/* eslint-disable */
export const memory: WebAssembly.Memory;
export const __wbg_ensembleview_free: (a: number, b: number) => void;
export const __wbg_gray_free: (a: number, b: number) => void;
export const __wbg_routingview_free: (a: number, b: number) => void;
export const ensemble_fit: (a: bigint, b: number, c: number, d: number, e: number, f: number) => [number, number, number];
export const ensembleview_constrained: (a: number) => [number, number];
export const ensembleview_ensemble_mse: (a: number) => [number, number];
export const ensembleview_equal: (a: number) => [number, number];
export const ensembleview_lambda: (a: number) => number;
export const ensembleview_member_mse: (a: number) => [number, number];
export const ensembleview_ridge: (a: number) => [number, number];
export const field_strip: (a: bigint, b: number, c: number, d: number, e: number, f: number, g: number, h: number, i: number) => [number, number, number];
export const gray_height: (a: number) => number;
export const gray_rgba: (a: number) => [number, number];
export const gray_width: (a: number) => number;
export const routing: (a: bigint, b: number, c: number, d: number) => [number, number, number];
export const routingview_calibrated: (a: number) => number;
export const routingview_dry: (a: number) => number;
export const routingview_maxima: (a: number) => [number, number];
export const routingview_wet: (a: number) => number;
export const __wbindgen_externrefs: WebAssembly.Table;
export const __wbindgen_malloc: (a: number, b: number) => number;
export const __externref_table_dealloc: (a: number) => void;
export const __wbindgen_free: (a: number, b: number, c: number) => void;
export const __wbindgen_start: () => void;
