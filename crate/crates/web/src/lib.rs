//! WebAssembly bindings for the demo page in `www/`.

pub mod explore;

use wasm_bindgen::prelude::*;

use explore::FieldParams;

fn js_err(e: nowcast::Error) -> JsError {
    JsError::new(&e.to_string())
}

/// Grayscale image: one byte per pixel, row-major.
#[wasm_bindgen]
pub struct Gray {
    width: usize,
    height: usize,
    pixels: Vec<u8>,
}

#[wasm_bindgen]
impl Gray {
    #[wasm_bindgen(getter)]
    pub fn width(&self) -> usize {
        self.width
    }

    #[wasm_bindgen(getter)]
    pub fn height(&self) -> usize {
        self.height
    }

    /// RGBA bytes ready for `ImageData`.
    pub fn rgba(&self) -> Vec<u8> {
        self.pixels.iter().flat_map(|&v| [v, v, v, 255]).collect()
    }
}

#[wasm_bindgen]
#[allow(clippy::too_many_arguments)]
pub fn field_strip(
    seed: u64,
    frames: usize,
    n_blobs: usize,
    velocity_max: f64,
    velocity_noise: f64,
    diffusion: u32,
    rain_sparsity: f64,
    show_rain: bool,
    contour: bool,
) -> Result<Gray, JsError> {
    let img = explore::field_strip(&FieldParams {
        seed,
        frames,
        n_blobs,
        velocity_max,
        velocity_noise,
        diffusion,
        rain_sparsity,
        show_rain,
        contour,
        ..FieldParams::default()
    })
    .map_err(js_err)?;
    Ok(Gray {
        width: img.width,
        height: img.height,
        pixels: img.pixels,
    })
}

#[wasm_bindgen]
pub struct RoutingView(explore::Routing);

#[wasm_bindgen]
impl RoutingView {
    pub fn maxima(&self) -> Vec<f64> {
        self.0.maxima.clone()
    }

    #[wasm_bindgen(getter)]
    pub fn calibrated(&self) -> f64 {
        self.0.calibrated
    }

    #[wasm_bindgen(getter)]
    pub fn dry(&self) -> usize {
        self.0.dry
    }

    #[wasm_bindgen(getter)]
    pub fn wet(&self) -> usize {
        self.0.wet
    }
}

#[wasm_bindgen]
pub fn routing(seed: u64, n: usize, sparsity: f64, threshold: f64) -> Result<RoutingView, JsError> {
    explore::routing(seed, n, sparsity, threshold).map(RoutingView).map_err(js_err)
}

#[wasm_bindgen]
pub struct EnsembleView(explore::EnsembleFit);

#[wasm_bindgen]
impl EnsembleView {
    pub fn equal(&self) -> Vec<f64> {
        self.0.equal.clone()
    }

    pub fn ridge(&self) -> Vec<f64> {
        self.0.ridge.clone()
    }

    pub fn constrained(&self) -> Vec<f64> {
        self.0.constrained.clone()
    }

    pub fn member_mse(&self) -> Vec<f64> {
        self.0.member_mse.clone()
    }

    /// `[equal, ridge, constrained]`.
    pub fn ensemble_mse(&self) -> Vec<f64> {
        self.0.ensemble_mse.to_vec()
    }

    #[wasm_bindgen(getter)]
    pub fn lambda(&self) -> f64 {
        self.0.lambda
    }
}

#[wasm_bindgen]
pub fn ensemble_fit(seed: u64, biases: Vec<f64>, noises: Vec<f64>, lambda_scale: f64) -> Result<EnsembleView, JsError> {
    explore::ensemble_fit(seed, &biases, &noises, lambda_scale, 4096)
        .map(EnsembleView)
        .map_err(js_err)
}
