"""Config parsing, sweeps and file emitters behind the ``augan`` command."""

from .config import DataConfig, SweepConfig, load_config, parse_config
from .emit import emit_ppm_grid, emit_svg_lines, read_csv, top_fraction_mean, write_csv
from .sweep import run_sweep, single_run
