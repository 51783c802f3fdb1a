//! Isotropic Disney "principled" BRDF, directional-light shading, and the
//! linear-to-sRGB gamma mapping.
//!
//! The lobe formulas follow Burley's 2012 course notes (diffuse with the
//! retro-reflective Fresnel factor, a Hanrahan-Krueger subsurface blend, a
//! GTR2 specular lobe with Smith masking and a tintable Schlick Fresnel, a
//! sheen lobe, and the GTR1 clearcoat). The evaluation is generic over
//! [`Real`], so running it on [`Dual`](crate::scalar::Dual) numbers yields
//! exact derivatives with respect to the twelve parameters.

use nalgebra::Vector3;

use crate::scalar::{lerp, Real};

pub const PARAM_COUNT: usize = 12;

/// The twelve unit-interval Disney parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DisneyParams<S> {
    pub base_color: [S; 3],
    pub subsurface: S,
    pub metallic: S,
    pub specular: S,
    pub specular_tint: S,
    pub roughness: S,
    pub sheen: S,
    pub sheen_tint: S,
    pub clearcoat: S,
    pub clearcoat_gloss: S,
}

impl<S: Real> DisneyParams<S> {
    /// Stable parameter order: baseColor r, g, b, subsurface, metallic,
    /// specular, specularTint, roughness, sheen, sheenTint, clearcoat,
    /// clearcoatGloss.
    pub fn from_array(p: [S; PARAM_COUNT]) -> Self {
        DisneyParams {
            base_color: [p[0], p[1], p[2]],
            subsurface: p[3],
            metallic: p[4],
            specular: p[5],
            specular_tint: p[6],
            roughness: p[7],
            sheen: p[8],
            sheen_tint: p[9],
            clearcoat: p[10],
            clearcoat_gloss: p[11],
        }
    }

    pub fn to_array(&self) -> [S; PARAM_COUNT] {
        [
            self.base_color[0],
            self.base_color[1],
            self.base_color[2],
            self.subsurface,
            self.metallic,
            self.specular,
            self.specular_tint,
            self.roughness,
            self.sheen,
            self.sheen_tint,
            self.clearcoat,
            self.clearcoat_gloss,
        ]
    }
}

fn schlick_weight(cos_theta: f64) -> f64 {
    let m = (1.0 - cos_theta).clamp(0.0, 1.0);
    m * m * m * m * m
}

/// GTR2 (GGX) microfacet distribution with a parameter-dependent width.
fn gtr2<S: Real>(n_dot_h: f64, alpha: S) -> S {
    let a2 = alpha * alpha;
    let c2 = S::from_f64(n_dot_h * n_dot_h);
    let t = S::from_f64(1.0) + (a2 - S::from_f64(1.0)) * c2;
    a2 / (S::from_f64(std::f64::consts::PI) * t * t)
}

/// GTR1 distribution used by the clearcoat lobe.
fn gtr1<S: Real>(n_dot_h: f64, alpha: S) -> S {
    if alpha.value() >= 1.0 {
        return S::from_f64(std::f64::consts::FRAC_1_PI);
    }
    let a2 = alpha * alpha;
    let c2 = S::from_f64(n_dot_h * n_dot_h);
    let t = S::from_f64(1.0) + (a2 - S::from_f64(1.0)) * c2;
    (a2 - S::from_f64(1.0)) / (S::from_f64(std::f64::consts::PI) * a2.ln() * t)
}

/// Smith masking term for GGX.
fn smith_g_ggx<S: Real>(n_dot_v: f64, alpha_g: S) -> S {
    let a = alpha_g * alpha_g;
    let b = S::from_f64(n_dot_v * n_dot_v);
    let root = (a + b - a * b).max(S::from_f64(0.0)).sqrt();
    S::from_f64(1.0) / (S::from_f64(n_dot_v) + root)
}

/// Evaluate the BRDF for unit vectors `n` (shading normal), `l` (to the
/// light), and `v` (to the viewer). Outside the upper hemisphere
/// (`n.l <= 0` or `n.v <= 0`) the result is zero.
pub fn disney_brdf_eval<S: Real>(
    params: &DisneyParams<S>,
    n: Vector3<f64>,
    l: Vector3<f64>,
    v: Vector3<f64>,
) -> [S; 3] {
    let zero = [S::from_f64(0.0); 3];
    let n_dot_l = n.dot(&l);
    let n_dot_v = n.dot(&v);
    if n_dot_l <= 0.0 || n_dot_v <= 0.0 {
        return zero;
    }
    let h = (l + v).normalize();
    let n_dot_h = n.dot(&h);
    let l_dot_h = l.dot(&h);

    let one = S::from_f64(1.0);
    let cd = params.base_color;
    let lum = S::from_f64(0.3) * cd[0] + S::from_f64(0.6) * cd[1] + S::from_f64(0.1) * cd[2];
    let tint = if lum.value() > 0.0 {
        [cd[0] / lum, cd[1] / lum, cd[2] / lum]
    } else {
        [one, one, one]
    };
    let spec_scale = params.specular * S::from_f64(0.08);
    let mut c_spec0 = [S::from_f64(0.0); 3];
    let mut c_sheen = [S::from_f64(0.0); 3];
    for k in 0..3 {
        let tinted = lerp(one, tint[k], params.specular_tint);
        c_spec0[k] = lerp(spec_scale * tinted, cd[k], params.metallic);
        c_sheen[k] = lerp(one, tint[k], params.sheen_tint);
    }

    // Diffuse with the retro-reflective grazing factor.
    let fl = schlick_weight(n_dot_l);
    let fv = schlick_weight(n_dot_v);
    let fd90 = S::from_f64(0.5) + S::from_f64(2.0 * l_dot_h * l_dot_h) * params.roughness;
    let fd = lerp(one, fd90, S::from_f64(fl)) * lerp(one, fd90, S::from_f64(fv));

    // Hanrahan-Krueger-inspired subsurface approximation.
    let fss90 = S::from_f64(l_dot_h * l_dot_h) * params.roughness;
    let fss = lerp(one, fss90, S::from_f64(fl)) * lerp(one, fss90, S::from_f64(fv));
    let ss = S::from_f64(1.25)
        * (fss * S::from_f64(1.0 / (n_dot_l + n_dot_v) - 0.5) + S::from_f64(0.5));

    // Specular GGX lobe.
    let alpha = (params.roughness * params.roughness).max(S::from_f64(0.001));
    let ds = gtr2(n_dot_h, alpha);
    let fh = schlick_weight(l_dot_h);
    let half_rough = S::from_f64(0.5) + params.roughness * S::from_f64(0.5);
    let alpha_g = half_rough * half_rough;
    let gs = smith_g_ggx(n_dot_l, alpha_g) * smith_g_ggx(n_dot_v, alpha_g);

    // Clearcoat (GTR1, fixed 0.25 Smith roughness, 4% Fresnel base).
    let dr = gtr1(
        n_dot_h,
        lerp(S::from_f64(0.1), S::from_f64(0.001), params.clearcoat_gloss),
    );
    let fr = lerp(S::from_f64(0.04), one, S::from_f64(fh));
    let gr = smith_g_ggx(n_dot_l, S::from_f64(0.25)) * smith_g_ggx(n_dot_v, S::from_f64(0.25));
    let coat = S::from_f64(0.25) * params.clearcoat * gr * fr * dr;

    let inv_pi = S::from_f64(std::f64::consts::FRAC_1_PI);
    let mut out = [S::from_f64(0.0); 3];
    for k in 0..3 {
        let diffuse = inv_pi * lerp(fd, ss, params.subsurface) * cd[k];
        let sheen = S::from_f64(fh) * params.sheen * c_sheen[k];
        let spec = gs * lerp(c_spec0[k], one, S::from_f64(fh)) * ds;
        out[k] = (diffuse + sheen) * (one - params.metallic) + spec + coat;
    }
    out
}

/// Outgoing radiance under a single directional light:
/// `f(x, l, v) * L_i * indicator * max(cos theta_l, 0)`.
pub fn shade_directional<S: Real>(
    params: &DisneyParams<S>,
    n: Vector3<f64>,
    l: Vector3<f64>,
    v: Vector3<f64>,
    light_intensity: f64,
    occluded: bool,
) -> [S; 3] {
    let zero = [S::from_f64(0.0); 3];
    if occluded || light_intensity <= 0.0 {
        return zero;
    }
    let cos_l = n.dot(&l);
    if cos_l <= 0.0 {
        return zero;
    }
    let f = disney_brdf_eval(params, n, l, v);
    let scale = S::from_f64(light_intensity * cos_l);
    [f[0] * scale, f[1] * scale, f[2] * scale]
}

/// Linear-to-sRGB gamma mapping on [0, 1]:
/// `(323/25) c` below 0.0031308, else `(211/200) c^(5/12) - 11/200`.
/// Inputs are clamped to the unit interval first.
pub fn gamma_map(c_lin: f64) -> f64 {
    gamma_map_s(c_lin)
}

/// Generic variant of [`gamma_map`], differentiable through [`Real`].
pub fn gamma_map_s<S: Real>(c_lin: S) -> S {
    let c = c_lin.clamp01();
    if c.value() <= 0.0031308 {
        c * S::from_f64(323.0 / 25.0)
    } else {
        // (211 c^(5/12) - 11) / 200: algebraically the textbook form, and
        // float-exact at the c = 1 endpoint.
        (c.powf_const(5.0 / 12.0) * S::from_f64(211.0) - S::from_f64(11.0)) / S::from_f64(200.0)
    }
}
