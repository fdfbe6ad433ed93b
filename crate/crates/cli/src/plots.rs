//! Gnuplot scripts for the CSVs of a run directory.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context};

use crate::config::ConfigError;

struct Figure {
    csv: &'static str,
    script: &'static str,
    body: &'static str,
}

const FIGURES: [Figure; 4] = [
    Figure {
        csv: "survival.csv",
        script: "survival.gp",
        body: "set title 'survival P(tau > t)'\nset xlabel 't'\nset logscale y\n\
plot 'survival.csv' using 1:2:3 with yerrorbars title 'p_hat', '' using 1:2 with lines notitle\n",
    },
    Figure {
        csv: "plateau.csv",
        script: "plateau.gp",
        body: "set title 'plateau exp(lambda t) p_hat(t)'\nset xlabel 't'\n\
plot 'plateau.csv' using 1:2:3:4 with yerrorbars title 'value', 1 with lines dashtype 2 title 'one'\n",
    },
    Figure {
        csv: "discrepancy.csv",
        script: "discrepancy.gp",
        body: "set title 'weighted discrepancy D(t)'\nset xlabel 't'\nset logscale y\n\
plot 'discrepancy.csv' using 1:2:3 with yerrorbars title 'D_hat'\n",
    },
    Figure {
        csv: "width_tail.csv",
        script: "width_tail.gp",
        body: "set title 'clan width coverage'\nset xlabel 't'\nset logscale y\n\
plot 'width_tail.csv' using 1:2:3 with yerrorbars title 'after', '' using 1:4:5 with yerrorbars title 'before', \
'' using 1:6 with lines title 'bound'\n",
    },
];

/// Writes one script per figure whose CSV exists; errors, writing nothing,
/// when none does.
pub fn emit_plots(dir: &Path) -> anyhow::Result<Vec<PathBuf>> {
    let present: Vec<&Figure> = FIGURES
        .iter()
        .filter(|f| dir.join(f.csv).is_file())
        .collect();
    if present.is_empty() {
        bail!(ConfigError(format!(
            "no plottable CSV files in {}",
            dir.display()
        )));
    }
    present
        .into_iter()
        .map(|f| {
            let path = dir.join(f.script);
            let text = format!(
                "# gnuplot script for {}\nset datafile separator ','\nset key autotitle columnhead\nset terminal pngcairo size 900,600\nset output '{}'\n{}",
                f.csv,
                f.script.replace(".gp", ".png"),
                f.body
            );
            std::fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
            Ok(path)
        })
        .collect()
}
