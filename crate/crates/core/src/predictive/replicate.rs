use crate::error::{Error, Result};
use crate::mcmc::PosteriorSamples;
use crate::model::Variant;
use crate::triangle::ReportingTriangle;

use super::predict::{covariance_factor, delay_cells, fresh_log_mu, glm_cells, total_draw};
use super::{context_for, draw_rng, map_draws, stream};

/// Replicate triangles over the fully observed rows, one per posterior draw.
#[derive(Debug, Clone, PartialEq)]
pub struct Replicates {
    /// 1-based times of the replicated rows.
    pub times: Vec<usize>,
    /// `totals[draw][row]`.
    pub totals: Vec<Vec<u64>>,
    /// `cells[draw][row][delay column]`, `D + 1` columns.
    pub cells: Vec<Vec<Vec<u64>>>,
}

impl Replicates {
    /// Checks shapes and that every row sums to its total.
    pub fn new(times: Vec<usize>, totals: Vec<Vec<u64>>, cells: Vec<Vec<Vec<u64>>>) -> Result<Self> {
        if totals.len() != cells.len() {
            return Err(Error::Domain("replicate totals and cells differ in count".into()));
        }
        let width = cells.first().and_then(|c| c.first()).map_or(0, Vec::len);
        for (ys, zs) in totals.iter().zip(&cells) {
            if ys.len() != times.len() || zs.len() != times.len() {
                return Err(Error::Domain("replicate does not cover every row".into()));
            }
            for (y, z) in ys.iter().zip(zs) {
                if z.len() != width || z.iter().sum::<u64>() != *y {
                    return Err(Error::Domain("replicate row does not sum to its total".into()));
                }
            }
        }
        Ok(Self { times, totals, cells })
    }

    pub fn n_replicates(&self) -> usize {
        self.totals.len()
    }

    pub fn n_rows(&self) -> usize {
        self.times.len()
    }

    pub fn width(&self) -> usize {
        self.cells.first().and_then(|c| c.first()).map_or(0, Vec::len)
    }
}

/// Observed totals and cells of the complete rows: the replication window.
pub(crate) fn observed_window(tri: &ReportingTriangle) -> (Vec<usize>, Vec<u64>, Vec<Vec<u64>>) {
    let rows = tri.complete_rows();
    let totals = rows.iter().map(|&r| tri.prefix_sum(r)).collect();
    let cells = rows.iter().map(|&r| tri.observed_cells(r).to_vec()).collect();
    (rows.into_iter().map(|r| r + 1).collect(), totals, cells)
}

/// Replicates `(ỹ, z̃)` of the fully observed rows from the fitted generative
/// process: under the GDMs `ỹ` from the count model and `z̃` given `ỹ`,
/// under the GLMs independent cells (with a fresh correlated `ln μ` under
/// GLM+) and `ỹ` their sum.
pub fn replicate_insample(samples: &PosteriorSamples, tri: &ReportingTriangle) -> Result<Replicates> {
    let ctx = context_for(samples, tri)?;
    let (times, _, _) = observed_window(tri);
    let seed = samples.config.seed;
    let multinomial = ctx.spec().multinomial_limit;
    let out = map_draws(samples, &ctx, |g, s| {
        let mut rng = draw_rng(seed, stream::REPLICATE, g);
        let chol = covariance_factor(s);
        let mut ys = Vec::with_capacity(times.len());
        let mut zs = Vec::with_capacity(times.len());
        for &t in &times {
            let mut cells = Vec::new();
            match ctx.variant() {
                Variant::Gdm | Variant::GdmUr => {
                    let (_, y) = total_draw(&ctx, s, t, &mut rng);
                    delay_cells(&ctx, s, t, y, multinomial, &mut rng, &mut cells);
                }
                Variant::Glm | Variant::GlmPlus => {
                    let lm = fresh_log_mu(&ctx, s, t, chol.as_ref(), &mut rng);
                    glm_cells(&ctx, s, &lm, 0, &mut rng, &mut cells);
                }
            }
            ys.push(cells.iter().sum());
            zs.push(cells);
        }
        (ys, zs)
    })?;
    let (totals, cells) = out.into_iter().unzip();
    Ok(Replicates { times, totals, cells })
}
