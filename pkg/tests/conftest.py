import math

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from housesplit.data_model import AccountView
from housesplit.synthetic import SyntheticConfig, generate_synthetic

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def make_account(n=2, m=200, d=5, sigma=0.0, sep_deg=60.0, seed=0, **kw):
    cfg = SyntheticConfig(n_users_per_account=n, d=d, movies_per_account=m, noise_sigma=sigma,
                          profile_separation=math.radians(sep_deg), seed=seed, **kw)
    return generate_synthetic(cfg)


def random_view(rng, m=30, d=3, n_truth=None):
    V = rng.standard_normal((m, d))
    r = rng.standard_normal(m)
    truth = None
    if n_truth:
        truth = np.r_[np.arange(n_truth), rng.integers(n_truth, size=m - n_truth)]
    return AccountView(np.arange(m), r, V, truth)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


FIXTURES = __import__("pathlib").Path(__file__).parent / "fixtures"


def run_pipeline(out, seed=7, config=None):
    """Synthesize, factorize, identify, select, evaluate and recommend in ``out``."""
    from housesplit.cli import main

    out = str(out)
    config = config or str(FIXTURES / "population50.json")
    s = str(seed)
    data, feats = f"{out}/data", f"{out}/features"
    steps = [
        ["synth", "--config", config],
        ["factorize", "--ratings", f"{data}/ratings.csv", "--d", "5", "--lambda", "1.0"],
        ["identify", "--features", feats, "--accounts", f"{data}/accounts.csv",
         "--truth", f"{data}/truth.csv", "--n", "2", "--algo", "em"],
        ["select", "--features", feats, "--accounts", f"{data}/accounts.csv", "--method", "bic"],
        ["evaluate", "--truth", f"{data}/truth.csv", "--reports", f"{out}/reports",
         "--features", feats, "--selection", f"{out}/selection/selection.csv",
         "--null-runs", "100"],
        ["recommend", "--truth", f"{data}/truth.csv", "--features", feats,
         "--accounts", f"{data}/accounts.csv"],
    ]
    outs = ["data", "features", "reports", "selection", "evaluation", "recommend"]
    for argv, name in zip(steps, outs):
        code = main(argv + ["--seed", s, "--out", f"{out}/{name}"])
        if code != 0:
            raise RuntimeError(f"{argv[0]} exited with {code}")


def tree_digest(root):
    """sha256 of every file under ``root`` keyed by relative path."""
    import hashlib
    from pathlib import Path

    root = Path(root)
    return {str(p.relative_to(root)): hashlib.sha256(p.read_bytes()).hexdigest()
            for p in sorted(root.rglob("*")) if p.is_file()}


ACCEPTANCE = []


def record(criterion, ok, detail=""):
    """Keep one pass/fail line per acceptance criterion for the terminal summary."""
    line = f"criterion {criterion:>2}: {'PASS' if ok else 'FAIL'}  {detail}".rstrip()
    ACCEPTANCE.append((criterion, line))
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(ACCEPTANCE, key=lambda t: t[0]):
            terminalreporter.write_line(line)
