"""Acceptance suite: one test per criterion, each at its stated tolerance.

Criteria 5 to 8 share one desk-scale training run (2,000 steps on the
default synthetic screen), built once per session.
"""

import dataclasses
import time

import numpy as np
import pytest
from scipy.stats import spearmanr

from gandl import autograd as ag
from gandl import axes, evalkit, svm
from gandl.autograd import Tensor
from gandl.gan import losses
from gandl.gan.checkpoint import decode_state, encode_state, load_checkpoint, save_checkpoint
from gandl.gan.config import GanConfig
from gandl.gan.estimator import critic_embeddings
from gandl.gan.training import ema_update, train
from gandl.gradsuite import OP_TOL, REGULARIZER_TOL, run_suite
from gandl.screen import CompoundProfile, SyntheticScreenConfig, generate_synthetic_screen, io, render_screen
from gandl.screen.io import Group

from .oracles import primal_qp

# Probes z-score features inside the SVM; the reason is in the decisions ledger.
PROBE = svm.SvmConfig(standardize=True)
SPLIT_SEED = 0
TRAIN_BUDGET_S = 30 * 60

FOREIGN = SyntheticScreenConfig(n_cell_lines=4, n_compounds=0, channels=6,
                                control_groups=("POS_CTRL",), n_controls_per_group=60, seed=7)
FOREIGN_DROPPED = 5

TOXIC = SyntheticScreenConfig(n_compounds=1, seed=11, compound_profiles=(
    CompoundProfile("TOX001", ec50_um=0.1, max_effect=1.0, toxic_above_um=1.0),))


@pytest.fixture(scope="session")
def desk_run():
    cfg = SyntheticScreenConfig()
    records, images, viability = render_screen(cfg)
    gan_cfg = GanConfig(steps=2000)
    start = time.perf_counter()
    state, history = train(gan_cfg, images, log_every=0)
    seconds = time.perf_counter() - start
    return {"records": records, "images": images, "state": state, "history": history,
            "train_seconds": seconds, "embeddings": critic_embeddings(state, images)}


# 1

def test_criterion_1_gradient_suite(acceptance_log):
    start = time.perf_counter()
    results = run_suite()
    seconds = time.perf_counter() - start
    failures = [r for r in results if not r.passed]
    worst_op = max(r.max_rel_error for r in results if r.tol == OP_TOL)
    worst_reg = max(r.max_rel_error for r in results if r.tol == REGULARIZER_TOL)
    ok = len(results) >= 100 and not failures and seconds < 120
    acceptance_log(1, "gradient suite", ok,
                   f"{len(results)} cases, {len(failures)} failed, worst op {worst_op:.2e} (<{OP_TOL}), "
                   f"worst regularizer {worst_reg:.2e} (<{REGULARIZER_TOL}), {seconds:.1f}s (<120s)")
    assert ok


# 2

def _linear_critic(v):
    vt = Tensor(v)
    return lambda x: ag.sum(x * vt, axis=tuple(range(1, v.ndim + 1)))


def test_criterion_2_regularizer_identities(acceptance_log):
    rng = np.random.default_rng(2)
    errors = {}
    for gamma in (0.5, 1.0, 10.0):
        v = rng.standard_normal((2, 4, 4))
        batch = rng.standard_normal((3, 2, 4, 4))
        got = losses.r1_penalty(_linear_critic(v), batch, gamma).item()
        errors.setdefault("r1", []).append(abs(got - gamma / 2 * np.sum(v * v)))
    for scale in (0.3, 1.0, 2.5):
        v = rng.standard_normal((2, 4, 4))
        v *= scale / np.linalg.norm(v)
        real, fake = rng.standard_normal((3, 2, 4, 4)), rng.standard_normal((3, 2, 4, 4))
        got = losses.lipschitz_l1_penalty(_linear_critic(v), real, fake).item()
        errors.setdefault("lipschitz_l1", []).append(abs(got - abs(np.linalg.norm(v) - 1.0)))
    for beta, k in ((0.99, 7), (0.999, 50), (0.5, 3)):
        params = {"a": Tensor(np.full((2, 3), 2.0))}
        ema = {"a": Tensor(np.zeros((2, 3)))}
        for _ in range(k):
            ema_update(params, ema, beta)
        expected = 2.0 * (1 - beta) * sum(beta ** i for i in range(k))
        errors.setdefault("ema", []).append(float(np.abs(ema["a"].data - expected).max()))
    worst = {name: max(vals) for name, vals in errors.items()}
    ok = all(err <= 1e-12 for err in worst.values())
    acceptance_log(2, "analytic regularizer identities", ok,
                   ", ".join(f"{k} max err {v:.1e}" for k, v in sorted(worst.items())) + " (<=1e-12)")
    assert ok


# 3

def test_criterion_3_svm_oracle(acceptance_log):
    worst_rel, dual_ok = 0.0, True
    for seed in range(50):
        rng = np.random.default_rng([3, seed])
        n, d = int(rng.integers(4, 41)), int(rng.integers(1, 9))
        y = np.where(np.arange(n) % 2 == 0, 1.0, -1.0)
        X = rng.standard_normal((n, d)) + rng.uniform(0, 2) * y[:, None] * np.eye(d)[0]
        c = float(rng.choice([0.1, 1.0, 10.0]))
        m = svm.fit(X, y, svm.SvmConfig(c=c, tol=1e-9, max_iter=200_000))
        ref = primal_qp(X, y, c)
        worst_rel = max(worst_rel, abs(svm.primal_objective(m.w, m.b, X, y, c) - ref) / abs(ref))
        trace = np.asarray(m.dual_objective)
        dual_ok &= bool(np.all(np.diff(trace) >= -1e-12 * np.abs(trace).max()))
    one_d = svm.fit(np.array([[-1.0], [1.0]]), np.array([-1.0, 1.0]), svm.SvmConfig(c=1e6))
    one_d_err = max(abs(one_d.w[0] - 1.0), abs(one_d.b))
    ok = worst_rel <= 1e-4 and dual_ok and one_d_err <= 1e-6
    acceptance_log(3, "SVM oracle equivalence", ok,
                   f"50 instances worst primal rel gap {worst_rel:.1e} (<=1e-4), dual nondecreasing "
                   f"{dual_ok}, 1-D case error {one_d_err:.1e} (<=1e-6)")
    assert ok


# 4

def test_criterion_4_geometry(acceptance_log):
    from scipy.stats import ortho_group
    rng = np.random.default_rng(4)
    unit_err = pyth_err = rot_err = eff_err = 0.0
    for trial in range(20):
        d = int(rng.integers(2, 12))
        y = np.where(np.arange(40) % 2 == 0, 1.0, -1.0)
        X = rng.standard_normal((40, d)) * rng.uniform(0.1, 10) + y[:, None] * rng.standard_normal(d)
        f = axes.fit_frame(X, y)
        unit_err = max(unit_err, abs(f.u @ f.u - 1.0))
        at_origin = dataclasses.replace(f, b=0.0)
        on, off = axes.project(at_origin, X)
        pyth_err = max(pyth_err, float(np.abs(on ** 2 + off ** 2 - (X ** 2).sum(1)).max()))
        R = ortho_group.rvs(d, random_state=trial)
        on_r, off_r = axes.project(dataclasses.replace(f, u=R @ f.u), X @ R.T)
        on_f, off_f = axes.project(f, X)
        rot_err = max(rot_err, float(np.abs(on_r - on_f).max()), float(np.abs(off_r - off_f).max()))
        groups = ["POS_CTRL" if lab > 0 else "NEG_CTRL" for lab in y]
        norm = axes.fit_efficacy_normalization(f, X, groups, "L")
        eff_err = max(eff_err, abs(axes.efficacy_score(norm, norm.mean_neg) + 1.0),
                      abs(axes.efficacy_score(norm, norm.mean_pos) - 1.0))
    ok = unit_err <= 1e-12 and pyth_err <= 1e-9 and rot_err <= 1e-9 and eff_err == 0.0
    acceptance_log(4, "geometry identities", ok,
                   f"|u|-1 {unit_err:.1e} (<=1e-12), Pythagoras {pyth_err:.1e} (<=1e-9), rotation "
                   f"{rot_err:.1e} (<=1e-9), control means to -1/+1 error {eff_err:.1e} (exact)")
    assert ok


# 5

@pytest.mark.slow
def test_criterion_5_desk_scale_separability(desk_run, acceptance_log):
    records, X = desk_run["records"], desk_run["embeddings"]
    base = evalkit.baseline_featurizer(desk_run["images"])
    ctrl = evalkit.controls_classification(X, records, SPLIT_SEED, svm_cfg=PROBE).accuracy
    lines = evalkit.cell_line_classification(X, records, SPLIT_SEED, svm_cfg=PROBE).accuracy
    b_ctrl = evalkit.controls_classification(base, records, SPLIT_SEED, svm_cfg=PROBE).accuracy
    b_lines = evalkit.cell_line_classification(base, records, SPLIT_SEED, svm_cfg=PROBE).accuracy
    seconds = desk_run["train_seconds"]
    ok = (ctrl >= 0.90 and lines >= 0.95 and ctrl > b_ctrl and lines > b_lines
          and seconds < TRAIN_BUDGET_S)
    acceptance_log(5, "desk-scale run", ok,
                   f"controls {ctrl:.3f} (>=0.90, baseline {b_ctrl:.3f}), cell lines {lines:.3f} "
                   f"(>=0.95, baseline {b_lines:.3f}), 2000 steps in {seconds / 60:.1f} min (<30)")
    assert ok


# 6

def _curves(records, X):
    keep = [i for i, r in enumerate(records) if r.is_control]
    labels = np.array([1.0 if records[i].group is Group.POS_CTRL else -1.0 for i in keep])
    frame = axes.fit_frame(X[keep], labels, svm_cfg=PROBE)
    norms = axes.fit_normalizations(frame, X, records)
    return norms, axes.dose_response(records, X, frame, norms)


@pytest.mark.slow
def test_criterion_6_dose_response(desk_run, acceptance_log):
    norms, curves = _curves(desk_run["records"], desk_run["embeddings"])
    inert = {p.name for p in SyntheticScreenConfig().compound_profiles if p.inert}
    worst_rho, missing, inert_bad = 1.0, [], []
    for cv in curves:
        if cv.compound in inert:
            if not (np.all(cv.scores < 0) and cv.effective_at is None):
                inert_bad.append(f"{cv.cell_line}/{cv.compound}")
            continue
        worst_rho = min(worst_rho, spearmanr(cv.concentrations, cv.scores)[0])
        if cv.effective_at is None:
            missing.append(f"{cv.cell_line}/{cv.compound}")
    oriented = all(n.mean_pos > n.mean_neg for n in norms.values())

    tox_records, tox_images, _ = render_screen(TOXIC)
    _, tox_curves = _curves(tox_records, critic_embeddings(desk_run["state"], tox_images))
    peaks_early = [int(np.argmax(cv.scores)) < len(cv.points) - 1 for cv in tox_curves]

    ok = worst_rho >= 0.9 and not missing and not inert_bad and oriented and all(peaks_early)
    acceptance_log(6, "dose-response recovery", ok,
                   f"worst Spearman {worst_rho:.3f} (>=0.9), curves without effective_at {missing}, "
                   f"inert violations {inert_bad}, toxicity-tail maxima before last dose "
                   f"{sum(peaks_early)}/{len(peaks_early)}")
    assert ok


# 7

@pytest.mark.slow
def test_criterion_7_zero_shot(desk_run, acceptance_log):
    state = desk_run["state"]
    records, images, _ = render_screen(FOREIGN)
    gan = evalkit.zero_shot_eval(lambda X: critic_embeddings(state, X), (records, images),
                                 FOREIGN_DROPPED, 4, SPLIT_SEED, state.config.channels, PROBE)
    base = evalkit.zero_shot_eval(evalkit.baseline_featurizer, (records, images), FOREIGN_DROPPED,
                                  4, SPLIT_SEED, state.config.channels, PROBE)
    ok = gan.accuracy >= 0.80 and gan.accuracy >= base.accuracy + 0.05
    acceptance_log(7, "zero-shot transfer", ok,
                   f"4-way accuracy {gan.accuracy:.3f} (>=0.80) vs baseline {base.accuracy:.3f} "
                   f"(need >= {base.accuracy + 0.05:.3f}) on {len(gan.split['test_ids'])} held-out wells")
    assert ok


# 8

BAD_ROWS = {
    "treated at zero concentration": "W9,HRCE,TREATED,CPD001,0,1,images/W0.img",
    "treated without compound": "W9,HRCE,TREATED,,1,1,images/W0.img",
    "control with compound": "W9,HRCE,POS_CTRL,CPD001,0,1,images/W0.img",
    "duplicate key": "W9,HRCE,TREATED,CPD001,1,1,images/W0.img",
    "duplicate well id": "W0,HRCE,TREATED,CPD001,1,2,images/W0.img",
    "unknown group": "W9,HRCE,MOCK,,0,1,images/W0.img",
    "nonpositive replicate": "W9,HRCE,TREATED,CPD001,1,0,images/W0.img",
    "negative concentration": "W9,HRCE,TREATED,CPD001,-1,2,images/W0.img",
    "dangling image path": "W9,HRCE,TREATED,CPD001,3,1,images/missing.img",
    "wrong field count": "W9,HRCE,TREATED",
}


@pytest.mark.slow
def test_criterion_8_determinism_and_formats(desk_run, tmp_path, acceptance_log):
    checks = {}
    small = SyntheticScreenConfig(n_compounds=2, n_doses=2, replicates_per_dose=2,
                                  n_controls_per_group=4)
    generate_synthetic_screen(small, tmp_path / "a")
    generate_synthetic_screen(small, tmp_path / "b")
    files = sorted(p.relative_to(tmp_path / "a") for p in (tmp_path / "a").rglob("*") if p.is_file())
    checks["screen reruns identical"] = all(
        (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes() for f in files)

    _, images, _ = render_screen(small)
    cfg = GanConfig(steps=12, batch_size=4)
    s1, h1 = train(cfg, images, log_every=0)
    s2, h2 = train(cfg, images, log_every=0)
    checks["training reruns identical"] = encode_state(s1) == encode_state(s2) and h1 == h2
    e1, e2 = critic_embeddings(s1, images), critic_embeddings(s2, images)
    r1 = evalkit.controls_classification(e1, render_screen(small)[0], 0, svm_cfg=PROBE).to_json()
    r2 = evalkit.controls_classification(e2, render_screen(small)[0], 0, svm_cfg=PROBE).to_json()
    checks["embeddings and reports identical"] = e1.tobytes() == e2.tobytes() and r1 == r2

    blob = encode_state(desk_run["state"])
    save_checkpoint(desk_run["state"], tmp_path / "desk.gdl")
    checks["checkpoint round trip"] = (encode_state(decode_state(blob)) == blob
                                       and encode_state(load_checkpoint(tmp_path / "desk.gdl")) == blob)
    checks["image blob round trip"] = all(
        io.encode_image(io.decode_image(io.encode_image(img))) == io.encode_image(img)
        and io.read_image(tmp_path / "a" / "images" / f"W{i:05d}.img").tobytes() == img.tobytes()
        for i, img in enumerate(images))

    header = ",".join(io.MANIFEST_HEADER)
    good = "W0,HRCE,TREATED,CPD001,1,1,images/W0.img"
    (tmp_path / "m" / "images").mkdir(parents=True)
    io.write_image(tmp_path / "m" / "images" / "W0.img", images[0])
    accepted = []
    for name, row in BAD_ROWS.items():
        path = tmp_path / "m" / "manifest.csv"
        path.write_text(f"{header}\n{good}\n{row}\n")
        try:
            io.load_manifest(path)
            accepted.append(name)
        except io.ManifestError as exc:
            if "row 3" not in str(exc):
                accepted.append(f"{name} (no row number)")
    path.write_text(f"{header}\n{good}\n")
    checks["valid manifest loads"] = len(io.load_manifest(path)) == 1
    checks[f"all {len(BAD_ROWS)} injected violations rejected"] = not accepted

    ok = all(checks.values())
    acceptance_log(8, "determinism and formats", ok,
                   "; ".join(f"{k}: {'ok' if v else 'FAILED'}" for k, v in checks.items())
                   + (f"; accepted {accepted}" if accepted else ""))
    assert ok
