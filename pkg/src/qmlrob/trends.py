"""Scaled trend experiments: the qualitative robustness effects at 4-qubit,
4-class desk scale, medians over seeds.

Shared by scripts/reproduce_trends.py and the acceptance suite so both run
the identical configurations.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .bench import ExperimentReport, parse_config, run_experiment

DEFAULT_SEEDS = (0, 1, 2)


def _median(values) -> float:
    return float(np.median(values))


def _attacked(report: ExperimentReport, field: str, mode: str = "pure"):
    rows = [r for r in report.rows if r.condition == "attacked" and r.eval_mode == mode]
    return [getattr(r, field) for r in rows]


def _baseline_acc(report: ExperimentReport, mode: str = "pure") -> dict[int, float]:
    return {
        r.seed: r.metrics.accuracy
        for r in report.rows
        if r.condition == "baseline" and r.eval_mode == mode
    }


def noise_collapse(out_dir, seeds=DEFAULT_SEEDS) -> tuple[float, float]:
    """Deep amplitude-encoded model under per-gate depolarizing p=0.01.

    Returns median (noiseless, depolarized) accuracies. The noiseless model
    separates the blobs; the 50-layer circuit accumulates enough channel
    applications that the readout collapses to the head bias (chance level).
    """
    raw = {
        "data": {"kind": "blobs", "n_classes": 4, "dim": 16, "per_class_train": 100,
                 "per_class_test": 50, "spread": 0.25},
        "model": {"kind": "qmlp", "encoding": "amplitude", "layers": 50, "n_qubits": 4},
        "mode": {"kind": "mixed", "channels": [{"kind": "depolarizing", "p": 0.01}]},
        "train": {"lr": 0.01, "epochs": 30},
        "seeds": list(seeds),
        "out_dir": str(Path(out_dir) / "noise_collapse"),
    }
    report = run_experiment(parse_config(raw))
    pure = [r.metrics.accuracy for r in report.rows if r.eval_mode == "pure"]
    mixed = [r.metrics.accuracy for r in report.rows if r.eval_mode == "mixed"]
    return _median(pure), _median(mixed)


def depth_resilience(out_dir, seeds=DEFAULT_SEEDS) -> tuple[float, float]:
    """Noisy accuracy of 2-layer vs 10-layer angle models.

    Noise is scaled to p=0.02 for the 4-qubit register: decoherence of the
    measured observables grows with register width at fixed depth, so the
    collapse threshold a wide register crosses at p=0.01 needs proportionally
    stronger channels on 4 qubits (at p=0.01 the deep model here still
    predicts above chance).
    """
    out = {}
    for layers in (2, 10):
        raw = {
            "data": {"kind": "blobs", "n_classes": 4, "dim": 8, "per_class_train": 100,
                     "per_class_test": 50, "spread": 0.5, "pca_dim": 4},
            "model": {"kind": "qmlp", "encoding": "angle", "layers": layers, "n_qubits": 4},
            "mode": {"kind": "mixed", "channels": [{"kind": "depolarizing", "p": 0.02}]},
            "train": {"lr": 0.02, "epochs": 40},
            "seeds": list(seeds),
            "out_dir": str(Path(out_dir) / f"depth_{layers}"),
        }
        report = run_experiment(parse_config(raw))
        out[layers] = _median(
            [r.metrics.accuracy for r in report.rows if r.eval_mode == "mixed"]
        )
    return out[2], out[10]


def label_flip_gap(out_dir, seeds=DEFAULT_SEEDS) -> dict[str, float]:
    """Relative accuracy under 50% flips: low-capacity quantum model vs a
    deliberately overfitting classical baseline, each with and without label
    smoothing (alpha = 0.2). Ratios use the un-smoothed clean baseline, as in
    the source tables. Returns medians {"q", "qls", "c", "cls"}.
    """
    data_q = {"kind": "blobs", "n_classes": 4, "dim": 8, "per_class_train": 100,
              "per_class_test": 50, "spread": 0.3, "pca_dim": 4}
    data_c = {k: v for k, v in data_q.items() if k != "pca_dim"}
    cells = {
        "q": ({"kind": "qmlp", "encoding": "angle", "layers": 2, "n_qubits": 4},
              data_q, {"lr": 0.02, "epochs": 40}, 0.0),
        "qls": ({"kind": "qmlp", "encoding": "angle", "layers": 2, "n_qubits": 4},
                data_q, {"lr": 0.02, "epochs": 40}, 0.2),
        "c": ({"kind": "cmlp", "hidden_dim": 64}, data_c, {"lr": 0.02, "epochs": 200}, 0.0),
        "cls": ({"kind": "cmlp", "hidden_dim": 64}, data_c, {"lr": 0.02, "epochs": 200}, 0.2),
    }
    reports = {}
    for name, (model, data, train, alpha) in cells.items():
        raw = {
            "data": data,
            "model": model,
            "train": {**train, "label_smoothing": alpha},
            "attack": {"kind": "label_flip", "ratio": 0.5},
            "seeds": list(seeds),
            "out_dir": str(Path(out_dir) / f"label_flip_{name}"),
        }
        reports[name] = run_experiment(parse_config(raw))

    out = {}
    for name, base_name in (("q", "q"), ("qls", "q"), ("c", "c"), ("cls", "c")):
        base = _baseline_acc(reports[base_name])
        ratios = [
            r.metrics.accuracy / base[r.seed]
            for r in reports[name].rows
            if r.condition == "attacked" and r.eval_mode == "pure"
        ]
        out[name] = _median(ratios)
    return out


def quid_dominance(out_dir, seeds=DEFAULT_SEEDS) -> tuple[float, float]:
    """Poison success rate of encoder-similarity relabeling vs random flips
    at ratio 0.5 on the 4-qubit QNN (noiseless). Returns medians
    (similarity, random)."""
    base = {
        "data": {"kind": "blobs", "n_classes": 4, "dim": 8, "per_class_train": 200,
                 "per_class_test": 50, "spread": 0.3, "pca_dim": 8},
        "model": {"kind": "qnn", "n_qubits": 4},
        "train": {"lr": 0.02, "batch_size": 32, "epochs": 30, "weight_decay": 0.001},
        "seeds": list(seeds),
    }
    out = {}
    for kind in ("quid", "label_flip"):
        raw = {**base, "attack": {"kind": kind, "ratio": 0.5},
               "out_dir": str(Path(out_dir) / f"poison_{kind}")}
        report = run_experiment(parse_config(raw))
        out[kind] = _median(_attacked(report, "asr"))
    return out["quid"], out["label_flip"]


EVASION_RANGE = (0.0, 1.0)  # shared input range keeps eps=0.10 commensurate


def evasion_ordering(out_dir, seeds=DEFAULT_SEEDS) -> dict[str, float]:
    """FGSM at eps=0.10 against the classical baseline and deep quantum
    models on identical [0, 1]-scaled features. Returns median relative
    accuracies {"cmlp", "angle", "amp"}."""
    data = {"kind": "blobs", "n_classes": 4, "dim": 8, "per_class_train": 100,
            "per_class_test": 50, "spread": 0.25, "pca_dim": 4}
    cells = {
        "cmlp": ({"kind": "cmlp", "hidden_dim": 256, "input_range": list(EVASION_RANGE)},
                 {"lr": 0.02, "epochs": 300}),
        "angle": ({"kind": "qmlp", "encoding": "angle", "layers": 50, "n_qubits": 4,
                   "input_range": list(EVASION_RANGE)}, {"lr": 0.02, "epochs": 40}),
        "amp": ({"kind": "qmlp", "encoding": "amplitude", "layers": 50, "n_qubits": 4,
                 "input_range": list(EVASION_RANGE)}, {"lr": 0.02, "epochs": 40}),
    }
    out = {}
    for name, (model, train) in cells.items():
        raw = {"data": data, "model": model, "train": train,
               "attack": {"kind": "fgsm", "eps": 0.10},
               "seeds": list(seeds),
               "out_dir": str(Path(out_dir) / f"evasion_{name}")}
        report = run_experiment(parse_config(raw))
        out[name] = _median(_attacked(report, "relative_accuracy"))
    return out
