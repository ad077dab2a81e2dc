import configparser
import logging
import sys
from pathlib import Path

try:
    from swerate import (
        OptimizerOptions,
        SpaceTimeGrid,
        StudyLogger,
        Control,
        preset,
        rate_discrete,
        rate_linear_oracle,
        upsilon_n,
    )
    from swerate.rate import RATE_COLUMNS
except ModuleNotFoundError as exc:
    missing = exc.name
    if missing in {"numpy", "scipy"}:
        sys.stderr.write(
            f"Missing Python dependency '{missing}'. Install the requirements first:\n"
            "  python3 -m pip install -r requirements.txt\n"
        )
        sys.exit(1)
    raise

logging.basicConfig(level=logging.INFO)

config_file = sys.argv[1] if len(sys.argv) > 1 else 'config.ini'
base_dir = Path(__file__).resolve().parent
config_path = (base_dir / config_file).resolve()
if not config_path.exists():
    logging.error("Config file not found: %s", config_path)
    sys.exit(1)
config = configparser.ConfigParser(inline_comment_prefixes=('#'))
config.read(str(config_path))

penalties = tuple(float(p) for p in config['optimizer'].get('penalties').split(','))
opts = OptimizerOptions(
    penalties=penalties,
    gtol_factor=config['optimizer'].getfloat('gtol_factor'),
    maxiter=config['optimizer'].getint('maxiter'),
    sigma_floor=config['validation'].getfloat('sigma_floor'),
)
stability = config['grid'].getfloat('stability_fraction')
study = StudyLogger(base_dir / 'results' / 'example', 'example', {'penalties': list(penalties)})

# one-point rate at a few offsets from the deterministic value, for each preset
rows = []
for name in ('LINEAR', 'NONLIN-A', 'NONLIN-B'):
    spec = preset(name)
    grid = SpaceTimeGrid.default(8, spec.T, stability)
    mu = upsilon_n(spec, Control.zeros(grid)).terminal(spec.x0)
    for dy in (-0.5, 0.25, 0.5):
        result = rate_discrete(spec, grid, mu + dy, opts)
        rows.append(result.row())
        if spec.is_linear_class():
            logging.info("%s dy=%+.2f: I^n=%.8f closed form %.8f", name, dy, result.value,
                         rate_linear_oracle(spec, mu + dy, n=grid.n))
        else:
            logging.info("%s dy=%+.2f: I^n=%.8f (%s)", name, dy, result.value, result.feasibility_method)

study.write('rates.csv', rows, RATE_COLUMNS)
study.close()
