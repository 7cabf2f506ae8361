/* tslint:disable */
/* eslint-disable */

export class EnsembleView {
    private constructor();
    free(): void;
    [Symbol.dispose](): void;
    constrained(): Float64Array;
    /**
     * `[equal, ridge, constrained]`.
     */
    ensemble_mse(): Float64Array;
    equal(): Float64Array;
    member_mse(): Float64Array;
    ridge(): Float64Array;
    readonly lambda: number;
}

/**
 * Grayscale image: one byte per pixel, row-major.
 */
export class Gray {
    private constructor();
    free(): void;
    [Symbol.dispose](): void;
    /**
     * RGBA bytes ready for `ImageData`.
     */
    rgba(): Uint8Array;
    readonly height: number;
    readonly width: number;
}

export class RoutingView {
    private constructor();
    free(): void;
    [Symbol.dispose](): void;
    maxima(): Float64Array;
    readonly calibrated: number;
    readonly dry: number;
    readonly wet: number;
}

export function ensemble_fit(seed: bigint, biases: Float64Array, noises: Float64Array, lambda_scale: number): EnsembleView;

export function field_strip(seed: bigint, frames: number, n_blobs: number, velocity_max: number, velocity_noise: number, diffusion: number, rain_sparsity: number, show_rain: boolean, contour: boolean): Gray;

export function routing(seed: bigint, n: number, sparsity: number, threshold: number): RoutingView;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly __wbg_ensembleview_free: (a: number, b: number) => void;
    readonly __wbg_gray_free: (a: number, b: number) => void;
    readonly __wbg_routingview_free: (a: number, b: number) => void;
    readonly ensemble_fit: (a: bigint, b: number, c: number, d: number, e: number, f: number) => [number, number, number];
    readonly ensembleview_constrained: (a: number) => [number, number];
    readonly ensembleview_ensemble_mse: (a: number) => [number, number];
    readonly ensembleview_equal: (a: number) => [number, number];
    readonly ensembleview_lambda: (a: number) => number;
    readonly ensembleview_member_mse: (a: number) => [number, number];
    readonly ensembleview_ridge: (a: number) => [number, number];
    readonly field_strip: (a: bigint, b: number, c: number, d: number, e: number, f: number, g: number, h: number, i: number) => [number, number, number];
    readonly gray_height: (a: number) => number;
    readonly gray_rgba: (a: number) => [number, number];
    readonly gray_width: (a: number) => number;
    readonly routing: (a: bigint, b: number, c: number, d: number) => [number, number, number];
    readonly routingview_calibrated: (a: number) => number;
    readonly routingview_dry: (a: number) => number;
    readonly routingview_maxima: (a: number) => [number, number];
    readonly routingview_wet: (a: number) => number;
    readonly __wbindgen_externrefs: WebAssembly.Table;
    readonly __wbindgen_malloc: (a: number, b: number) => number;
    readonly __externref_table_dealloc: (a: number) => void;
    readonly __wbindgen_free: (a: number, b: number, c: number) => void;
    readonly __wbindgen_start: () => void;
}

export type SyncInitInput = BufferSource | WebAssembly.Module;

/**
 * Instantiates the given `module`, which can either be bytes or
 * a precompiled `WebAssembly.Module`.
 *
 * @param {{ module: SyncInitInput }} module - Passing `SyncInitInput` directly is deprecated.
 *
 * @returns {InitOutput}
 */
export function initSync(module: { module: SyncInitInput } | SyncInitInput): InitOutput;

/**
 * If `module_or_path` is {RequestInfo} or {URL}, makes a request and
 * for everything else, calls `WebAssembly.instantiate` directly.
 *
 * @param {{ module_or_path: InitInput | Promise<InitInput> }} module_or_path - Passing `InitInput` directly is deprecated.
 *
 * @returns {Promise<InitOutput>}
 */
export default function __wbg_init (module_or_path?: { module_or_path: InitInput | Promise<InitInput> } | InitInput | Promise<InitInput>): Promise<InitOutput>;
