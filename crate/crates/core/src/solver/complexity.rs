//! Closed-form size accounting for the single-level planning model.
//!
//! Given the structural dimensions of a hub, these formulas predict how many
//! variables and rows the exactness-preserving single-level model has before
//! it is handed to the integer solver. They assume the fully symmetric role
//! layout: every energy has exactly one grid connection, and every energy can
//! be imported, exported, and carries a demand. The counts cover the
//! per-period row families plus the capacity discretization; one-off rows
//! (annual emission caps, the cost-matching row) sit outside the scope.

/// Structural dimensions of a planning instance.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModelDims {
    /// Energy carriers (each with one grid connection).
    pub energies: usize,
    /// Network branches, virtual storage branches included.
    pub branches: usize,
    /// Output-side ports: device output ports plus one port per bus.
    pub out_ports: usize,
    /// Converter devices.
    pub converters: usize,
    /// Storage devices.
    pub storages: usize,
    /// Typical days kept after reduction.
    pub scenarios: usize,
    /// Dispatch periods per day.
    pub periods: usize,
    /// Planning years.
    pub years: usize,
    /// Bits per grid-connection capacity.
    pub cap_bits: usize,
    /// Bits per storage power rating.
    pub power_bits: usize,
    /// Bits per storage energy rating.
    pub energy_bits: usize,
    /// Bits per converter unit count.
    pub unit_bits: usize,
}

/// Predicted model size.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ComplexityCounts {
    /// Sizing decisions before discretization (one per connection,
    /// two per storage, one per converter).
    pub integer_vars: usize,
    /// Bits after discretizing the sizing decisions.
    pub binary_vars: usize,
    /// Continuous variables across all periods, primal and dual together
    /// with the product terms introduced by linearization.
    pub continuous_vars: usize,
    /// Constraint rows across all periods, including the three-row envelope
    /// per linearized product.
    pub constraint_rows: usize,
}

pub fn count_complexity(d: &ModelDims) -> ComplexityCounts {
    let m = d.energies;
    let l = d.branches;
    let p_out = d.out_ports;
    let g_c = d.converters;
    let g_s = d.storages;
    let sty = d.scenarios * d.periods * d.years;
    let n_a = d.cap_bits;
    let n_bc = d.power_bits + d.energy_bits;
    let n_d = d.unit_bits;

    // Per-period base: primal flows, reservoir levels, exports, and the dual
    // multipliers of every row family that carries one.
    let base = 2 * l + 6 * g_s + 5 * m + p_out + g_c;
    // Each discretization bit pairs with two bound duals per connection
    // (import price and import cap), two per storage rating, one per
    // converter — each pair one product variable.
    let products = 2 * m * n_a + 2 * g_s * n_bc + g_c * n_d;
    // Every product costs a three-row envelope; the converter products
    // appear in one constraint family instead of two.
    let envelope_rows = 6 * m * n_a + 6 * g_s * n_bc + 3 * g_c * n_d;

    ComplexityCounts {
        integer_vars: m + 2 * g_s + g_c,
        binary_vars: n_a * m + g_s * n_bc + n_d * g_c,
        continuous_vars: sty * (base + products),
        constraint_rows: sty * (base + envelope_rows),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Two heat converters on three energies, no storage: the desk example.
    fn desk_dims() -> ModelDims {
        ModelDims {
            energies: 3,
            branches: 7,
            out_ports: 5,
            converters: 2,
            storages: 0,
            scenarios: 1,
            periods: 2,
            years: 1,
            cap_bits: 4,
            power_bits: 0,
            energy_bits: 0,
            unit_bits: 4,
        }
    }

    #[test]
    fn desk_example_counts() {
        let c = count_complexity(&desk_dims());
        assert_eq!(c.integer_vars, 5);
        assert_eq!(c.binary_vars, 3 * 4 + 2 * 4);
        // base = 2*7 + 0 + 5*3 + 5 + 2 = 36; products = 2*3*4 + 2*4 = 32
        assert_eq!(c.continuous_vars, 2 * (36 + 32));
        // envelopes = 6*3*4 + 3*2*4 = 96
        assert_eq!(c.constraint_rows, 2 * (36 + 96));
    }

    #[test]
    fn sizing_counts_ignore_the_time_axis() {
        let a = count_complexity(&desk_dims());
        let mut d = desk_dims();
        d.scenarios = 12;
        d.periods = 24;
        d.years = 20;
        let b = count_complexity(&d);
        assert_eq!(a.integer_vars, b.integer_vars);
        assert_eq!(a.binary_vars, b.binary_vars);
    }

    #[test]
    fn period_counts_scale_linearly_with_time() {
        let base = count_complexity(&desk_dims());
        let mut d = desk_dims();
        d.scenarios = 5;
        d.years = 3;
        let scaled = count_complexity(&d);
        assert_eq!(scaled.continuous_vars, 15 * base.continuous_vars);
        assert_eq!(scaled.constraint_rows, 15 * base.constraint_rows);
    }

    #[test]
    fn storage_contributes_both_ratings() {
        let mut d = desk_dims();
        d.storages = 2;
        d.power_bits = 3;
        d.energy_bits = 5;
        let c = count_complexity(&d);
        assert_eq!(c.integer_vars, 3 + 4 + 2);
        assert_eq!(c.binary_vars, 12 + 2 * 8 + 8);
    }
}
