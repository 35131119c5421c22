//! Browser bindings: the fields `A` and `B` at a 2x2 gradient, the
//! Legendre-Hadamard numerator along a rank-one direction, and a laminate
//! rendered as SVG. Results cross the boundary as JSON strings.

use serde_json::json;
use wasm_bindgen::prelude::*;

use minsurf::area::{area_density, b_coeffs, field_a, field_b};
use minsurf::convexity::{lh_gap_area, RankOneDirection};
use minsurf::laminate::{build_laminate, h1h2_critical_map, LaminateSpec, Polygon};
use minsurf::matrix::GradientMatrix;

fn err(e: minsurf::Error) -> JsValue {
    JsValue::from_str(&e.to_string())
}

fn matrix(entries: &[f64]) -> Result<GradientMatrix, JsValue> {
    if entries.len() != 4 || entries.iter().any(|v| !v.is_finite()) {
        return Err(JsValue::from_str("expected four finite entries"));
    }
    Ok(GradientMatrix::from_flat(2, entries))
}

/// `A(X)`, `B(X)` and the coefficients of `B` for `X = ((x11, x12), (x21, x22))`.
#[wasm_bindgen]
pub fn fields(entries: &[f64]) -> Result<String, JsValue> {
    let x = matrix(entries)?;
    let b = field_b(&x);
    let c = b_coeffs(&x);
    Ok(json!({
        "area": area_density(&x),
        "a": field_a(&x).rows(),
        "b": b.0,
        "trace_b": b.trace(),
        "det_b": b.det(),
        "alpha": c.alpha,
        "beta": c.beta,
        "gamma": c.gamma,
    })
    .to_string())
}

/// Legendre-Hadamard terms of the area density at `X` along `a (x) b`.
#[wasm_bindgen]
pub fn legendre_hadamard(entries: &[f64], a: &[f64], b: &[f64]) -> Result<String, JsValue> {
    let x = matrix(entries)?;
    if a.len() != 2 || b.len() != 2 {
        return Err(JsValue::from_str("a and b need two entries each"));
    }
    let dir = RankOneDirection::new(a, [b[0], b[1]]).map_err(err)?;
    let g = lh_gap_area(&x, &dir).map_err(err)?;
    Ok(json!({
        "direction": dir.matrix.rows(),
        "numerator": g.numerator,
        "gap": g.gap,
        "brackets": g.brackets,
        "second_derivative": g.second_derivative(&x),
    })
    .to_string())
}

/// Laminate between `((1,0),(0,-1))` and `((-1,0),(0,-1))` on the unit
/// square; `critical` drops the boundary collar. Returns the SVG and the
/// audit.
#[wasm_bindgen]
pub fn laminate(t: f64, eps: f64, critical: bool, width_px: f64) -> Result<String, JsValue> {
    let domain = Polygon::unit_square();
    if critical {
        let cm = h1h2_critical_map(&domain, eps).map_err(err)?;
        return Ok(json!({
            "svg": cm.map.to_svg(width_px),
            "pieces": cm.map.pieces.len(),
            "passes": cm.audit.passes,
            "audit": cm.audit,
        })
        .to_string());
    }
    let b = GradientMatrix::from_flat(2, &[1.0, 0.0, 0.0, -1.0]);
    let c = GradientMatrix::from_flat(2, &[-1.0, 0.0, 0.0, -1.0]);
    let spec = LaminateSpec::new(b, c, t, eps).map_err(err)?;
    let lam = build_laminate(&spec, &domain).map_err(err)?;
    Ok(json!({
        "svg": lam.map.to_svg(width_px),
        "pieces": lam.map.pieces.len(),
        "passes": lam.audit.passes,
        "audit": lam.audit,
    })
    .to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fields_at_zero() {
        let v: serde_json::Value = serde_json::from_str(&fields(&[0.0; 4]).unwrap()).unwrap();
        assert_eq!(v["area"], 1.0);
        assert_eq!(v["b"], json!([[0.0, -1.0], [1.0, 0.0]]));
    }

    #[test]
    fn lh_and_laminate() {
        let v: serde_json::Value =
            serde_json::from_str(&legendre_hadamard(&[0.5, 0.1, -0.2, 1.0], &[1.0, 1.0], &[0.0, 1.0]).unwrap()).unwrap();
        assert!(v["gap"].as_f64().unwrap() >= -1e-12);
        let v: serde_json::Value = serde_json::from_str(&laminate(0.5, 0.1, false, 200.0).unwrap()).unwrap();
        assert_eq!(v["passes"], true);
        assert!(v["svg"].as_str().unwrap().starts_with("<svg"));
    }
}
