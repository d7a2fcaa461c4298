use serde::{Deserialize, Serialize};

use super::level::level_flux;
use super::CascadeError;
use crate::spectral::{PhysicalField, SpectralField, Transformer};

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct NonlinearityIdentityReport {
    pub levels: usize,
    /// `‖Σ_j level terms - P(u·∇)u‖_{L²}`.
    pub residual: f64,
    /// `‖P(u·∇)u‖_{L²}`.
    pub reference: f64,
    /// `residual / reference`, or 0 when both vanish.
    pub relative: f64,
}

/// Sums the levels into `u^(k)` and checks the telescoping identity
///
/// `Σ_j P[(v^j·∇)v^j + (u^{j-1}·∇)v^j + (v^j·∇)u^{j-1}] = P(u^(k)·∇)u^(k)`.
///
/// The left side is built level by level in divergence form, the right side
/// from spectral gradients of the assembled field.
pub fn reassemble(
    levels: &[SpectralField],
    transformer: &mut Transformer,
) -> Result<(SpectralField, NonlinearityIdentityReport), CascadeError> {
    let Some(first) = levels.first() else {
        return Err(CascadeError::InvalidParameter("no levels to reassemble".into()));
    };
    let lat = first.lattice().clone();
    let mut lower = SpectralField::zeros(&lat);
    let mut lower_phys = PhysicalField::zeros(lat.len());
    let mut lhs = SpectralField::zeros(&lat);
    for v in levels {
        first.check_lattice(v)?;
        if v.is_zero() {
            continue;
        }
        let vp = transformer.to_physical(v);
        let flux = level_flux(&vp, &lower_phys, 1.0, !lower.is_zero());
        lhs.axpy(1.0, &transformer.projected_divergence_sym(&flux));
        lower.axpy(1.0, v);
        lower_phys.axpy(1.0, &vp);
    }
    let rhs = transformer.convective_term(&lower, &lower)?;
    let residual = lhs.sub(&rhs).l2_norm();
    let reference = rhs.l2_norm();
    let relative = if reference > 0.0 {
        residual / reference
    } else if residual == 0.0 {
        0.0
    } else {
        f64::INFINITY
    };
    Ok((
        lower,
        NonlinearityIdentityReport {
            levels: levels.len(),
            residual,
            reference,
            relative,
        },
    ))
}
