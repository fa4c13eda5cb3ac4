"""Reproducible desk-scale runners for the case studies.

Each case builds a ground-truth model per seed, trains every configured
variant on the same data split, and writes one directory per run plus
cross-run summaries:

    out/<case>/<variant>/run_<seed>/history.csv   deterministic records
    out/<case>/<variant>/run_<seed>/timing.csv    wall-clock per epoch
    out/<case>/<variant>/run_<seed>/metrics.json  end-of-run diagnostics
    out/<case>/summary.csv                        median/IQR per metric
    out/<case>/pairs.csv                          paired per-seed diffs

``history.csv`` holds only deterministic columns so a rerun with the
same seed is byte-identical; wall-clock times live in ``timing.csv``.
Desk scale shrinks sample counts and epochs to laptop minutes; paper
scale restores the published protocol sizes.  The ``certify`` case runs
the exact-oracle sweeps instead of training and writes verdict tables.
"""

from __future__ import annotations

import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from importlib import resources
from pathlib import Path

import numpy as np

from . import diagnostics as diag
from .bayesnet import (
    BallModel,
    DiscreteBayesNet,
    LinearGaussianNet,
    SampleBatch,
    ancestral_sample,
    ball_sample,
    dummy_encode,
    random_cpts,
)
from .errors import UnpairedRuns
from .graph import Dag, FamilySpec, child_parent_families, hasse_dag
from .objectives import ObjectiveForm
from .rng import STREAM_INSTANCES, philox
from .training import TrainConfig, forward_eval, generator_sample, history_columns, train

__all__ = [
    "CASES",
    "CaseStudy",
    "load_structure",
    "hasse_truth",
    "run_case",
    "compare_variants",
    "write_history_csv",
]

CASES = ("hasse", "ball", "child", "earthquake", "certify")


@dataclass(frozen=True)
class CaseStudy:
    """One batch of seeded runs of a named case.

    ``overrides`` patches the per-variant train configs (any TrainConfig
    field); ``scale`` picks desk or paper protocol sizes.
    """

    tag: str
    run_count: int = 5
    base_seed: int = 0
    scale: str = "desk"
    overrides: dict | None = None

    def __post_init__(self):
        if self.tag not in CASES:
            raise ValueError(f"tag must be one of {CASES}")
        if self.run_count < 1:
            raise ValueError("run_count must be at least 1")
        if self.scale not in ("desk", "paper"):
            raise ValueError("scale must be 'desk' or 'paper'")


# ---------------------------------------------------------------------------
# Case protocols
# ---------------------------------------------------------------------------

def load_structure(name_or_path) -> tuple:
    """DAG and cardinalities from a structure JSON document.

    ``name_or_path`` is either the name of a bundled network structure
    (``child``, ``earthquake``) or a path to a file in the same format:
    a ``nodes`` array of ``{name, cardinality, parents}`` entries.
    """
    text = None
    if isinstance(name_or_path, str) and "/" not in name_or_path and not name_or_path.endswith(".json"):
        text = resources.files("gigan.data").joinpath(f"{name_or_path}.json").read_text()
    else:
        text = Path(name_or_path).read_text()
    doc = json.loads(text)
    nodes = doc["nodes"]
    index = {node["name"]: i for i, node in enumerate(nodes)}
    edges = set()
    for i, node in enumerate(nodes):
        for parent in node["parents"]:
            edges.add((index[parent], i))
    dag = Dag(len(nodes), frozenset(edges), tuple(node["name"] for node in nodes))
    cards = tuple(int(node["cardinality"]) for node in nodes)
    return dag, cards


def hasse_truth(seed: int) -> LinearGaussianNet:
    """Linear-Gaussian net on the three-set subset lattice for one seed.

    Edge coefficients are drawn from the N(0.6, 0.05^2) prior; every
    node has noise scale 0.5 (the root inherits it as its own scale).
    """
    dag = hasse_dag(3)
    rng = philox(seed, STREAM_INSTANCES)
    coeffs = {}
    for parent, child in sorted(dag.edges):
        coeffs[(parent, child)] = float(rng.normal(0.6, 0.05))
    noise = tuple([0.5] * dag.node_count)
    roots = [i for i in range(dag.node_count) if not dag.parents(i)]
    root_mean = {i: 0.0 for i in roots}
    root_std = {i: 0.5 for i in roots}
    return LinearGaussianNet(dag, coeffs, noise, root_mean, root_std)


def _scaled(desk, paper, scale):
    return desk if scale == "desk" else paper


def _case_plan(cs: CaseStudy) -> dict:
    """Per-case protocol: truth builder, sample counts, variant configs."""
    scale = cs.scale
    if cs.tag == "hasse":
        base = TrainConfig(
            objective=ObjectiveForm.DV_KL,
            batch_size=256,
            max_epochs=_scaled(20, 60, scale),
            lr_disc=1e-3,
            lr_gen=3e-3,
            spectral_norm=True,
            lipschitz_scale=1.0,
            early_stop_metric="energy_distance",
            stop_threshold=0.05,
            patience=5,
            latent_dim=8,
            gen_widths=(),
            critic_widths=(16, 16),
        )
        return {
            "samples": _scaled(4000, 32000, scale),
            "base": base,
            "variants": {
                "monolithic": {"mode": "monolithic"},
                "graph_informed": {"mode": "graph_informed", "depth": 1},
                "misaligned": {"mode": "misaligned"},
            },
        }
    if cs.tag == "ball":
        base = TrainConfig(
            objective=ObjectiveForm.DV_KL,
            batch_size=256,
            max_epochs=_scaled(30, 60, scale),
            lr_disc=5e-4,
            lr_gen=1e-3,
            spectral_norm=True,
            lipschitz_scale=1.0,
            latent_dim=64,
            gen_widths=(128, 128),
            gen_activation="swish",
            critic_widths=(32, 32),
        )
        return {
            "samples": _scaled(4000, 32000, scale),
            "base": base,
            "variants": {
                "monolithic": {"mode": "monolithic"},
                "graph_informed": {"mode": "graph_informed", "depth": 1},
                "monolithic_classical": {"mode": "monolithic", "spectral_norm": False},
                "graph_informed_classical": {"mode": "graph_informed", "depth": 1, "spectral_norm": False},
            },
        }
    if cs.tag == "child":
        base = TrainConfig(
            objective=ObjectiveForm.FGAN_JS,
            batch_size=512,
            max_epochs=_scaled(30, 150, scale),
            lr_disc=5e-4,
            lr_gen=5e-5,
            spectral_norm=True,
            early_stop_metric="avg_loglik",
            patience=20,
            min_delta=1e-3,
            latent_dim=32,
            gen_widths=(64, 64, 64, 64),
            gen_activation="swish",
            critic_widths=(16, 8, 4),
        )
        return {
            "samples": _scaled(8000, 64000, scale),
            "base": base,
            "variants": {
                "monolithic": {"mode": "monolithic"},
                "depth_1": {"mode": "graph_informed", "depth": 1},
                "depth_3": {"mode": "graph_informed", "depth": 3},
            },
        }
    base = TrainConfig(
        objective=ObjectiveForm.FGAN_JS,
        batch_size=256,
        max_epochs=_scaled(40, 120, scale),
        lr_disc=1e-4,
        lr_gen=5e-5,
        spectral_norm=True,
        early_stop_metric="avg_loglik",
        patience=20,
        min_delta=1e-3,
        latent_dim=16,
        gen_widths=(32, 32),
        gen_activation="swish",
        critic_widths=(32, 32),
    )
    return {
        "samples": _scaled(4000, 8000, scale),
        "base": base,
        "variants": {
            "monolithic": {"mode": "monolithic"},
            "graph_informed": {"mode": "graph_informed", "depth": 1},
        },
    }


# ---------------------------------------------------------------------------
# CSV helpers (deterministic formatting)
# ---------------------------------------------------------------------------

def _fmt(value) -> str:
    if isinstance(value, bool):
        return str(value)
    if isinstance(value, float):
        return repr(float(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return str(value)


def _write_csv(path, columns, rows) -> None:
    lines = [",".join(columns)]
    for row in rows:
        lines.append(",".join(_fmt(row[c]) for c in columns))
    Path(path).write_text("\n".join(lines) + "\n")


def write_history_csv(history, out_dir) -> None:
    """Write history.csv (deterministic columns) and timing.csv."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    cols = history_columns(history.critic_count)
    det_cols = [c for c in cols if c != "seconds"]
    _write_csv(out_dir / "history.csv", det_cols, history.records)
    _write_csv(out_dir / "timing.csv", ["epoch", "split", "seconds"], history.records)


# ---------------------------------------------------------------------------
# Per-run execution
# ---------------------------------------------------------------------------

def _ball_families(dag: Dag) -> FamilySpec:
    """Child-parent families of the non-root trajectory nodes.

    The first time point is deterministically zero, so its singleton
    family carries no information and is dropped (14 critics on a
    15-node trajectory).
    """
    fams = [fam for fam in child_parent_families(dag).families if len(fam) > 1]
    return FamilySpec.uniform(fams)


def _end_metrics(case, state, history, truth, val_rows, seed):
    """End-of-run diagnostics at the returned (best) checkpoint."""
    metrics = {"aborted": history.aborted}
    vals = [r for r in history.records if r["split"] == "val"]
    if vals:
        metrics["best_val_objective"] = min(r["objective"] for r in vals)
        metrics["epochs"] = history.epochs
    if history.aborted or not vals:
        return metrics
    count = val_rows.shape[0]
    sample_seed = seed + 90_000_001
    if isinstance(truth, DiscreteBayesNet):
        hard = generator_sample(state.generator, count, sample_seed, encoding=state.encoding, hard=True)
        fake_rows = dummy_encode(hard, truth.cardinalities)[0].data
        tv = diag.node_tv(hard, truth, seed=seed)
        metrics["max_node_tv"] = float(tv.max())
        metrics["mean_node_tv"] = float(tv.mean())
        metrics["avg_loglik"] = diag.avg_loglik_truth(hard, truth)
    else:
        fake_rows = generator_sample(state.generator, count, sample_seed).data
    metrics["energy_distance"] = diag.energy_distance(val_rows, fake_rows)
    for i, critic in enumerate(state.critics):
        cols = state.family_columns[i]
        real_scores, _ = forward_eval(critic, val_rows[:, cols])
        fake_scores, _ = forward_eval(critic, fake_rows[:, cols])
        metrics[f"auc_{i}"] = diag.auc(real_scores.ravel(), fake_scores.ravel())
    aucs = [metrics[f"auc_{i}"] for i in range(len(state.critics))]
    metrics["max_auc_gap"] = float(max(abs(a - 0.5) for a in aucs))
    if case == "hasse":
        fake = SampleBatch(fake_rows, tuple(range(fake_rows.shape[1])))
        metrics["parent_coeff_error"] = diag.parent_coeff_error(fake, truth)
    if case == "ball":
        g_hat, v0 = diag.fit_ball_physics(fake_rows)
        metrics["g_hat"] = g_hat
        metrics["v0_mean_hat"] = float(v0.mean())
        metrics["v0_std_hat"] = float(v0.std(ddof=1))
    return metrics


def _single_run(case, variant, config, truth, dag, data, families, run_dir):
    state, history = train(
        config, data, dag,
        net=truth if isinstance(truth, DiscreteBayesNet) else None,
        families=families,
    )
    write_history_csv(history, run_dir)
    if isinstance(truth, DiscreteBayesNet):
        encoded = dummy_encode(data, truth.cardinalities)[0].data
    else:
        encoded = data.data
    n_train = int(round(config.split * encoded.shape[0]))
    metrics = _end_metrics(case, state, history, truth, encoded[n_train:], config.seed)
    with open(Path(run_dir) / "metrics.json", "w") as fh:
        json.dump(metrics, fh, indent=1, sort_keys=True)
        fh.write("\n")
    return metrics


def _truth_and_data(tag, plan, seed):
    if tag == "hasse":
        truth = hasse_truth(seed)
        data = ancestral_sample(truth, plan["samples"], seed)
        return truth, truth.dag, data
    if tag == "ball":
        model = BallModel()
        data = ball_sample(model, plan["samples"], seed)
        return model, model.dag(), data
    dag, cards = load_structure(tag)
    truth = random_cpts(dag, cards, 1.0, seed)
    data = ancestral_sample(truth, plan["samples"], seed)
    return truth, dag, data


def _variant_config(plan, variant_over, cs, seed):
    over = dict(variant_over)
    over.update(cs.overrides or {})
    config = replace(plan["base"], **over, seed=seed)
    if config.mode == "misaligned":
        config = replace(config, misalign_seed=seed)
    return config


def run_case(cs: CaseStudy, out_dir) -> list:
    """Run one case end to end; returns the summary rows.

    Training cases execute ``run_count`` seeds for every variant (the
    same seed shares its ground-truth instance and data across variants,
    so comparisons are paired) and aggregate medians and interquartile
    ranges per metric.  ``GIGAN_THREADS`` caps how many runs execute
    concurrently.  The certify case instead runs the oracle sweeps and
    writes one verdict table per sweep.
    """
    out_root = Path(out_dir) / cs.tag
    if cs.tag == "certify":
        return _run_certify(cs, out_root)
    plan = _case_plan(cs)
    seeds = [cs.base_seed + k for k in range(cs.run_count)]
    jobs = []
    for seed in seeds:
        truth, dag, data = _truth_and_data(cs.tag, plan, seed)
        for variant, over in plan["variants"].items():
            config = _variant_config(plan, over, cs, seed)
            families = None
            if cs.tag == "ball" and config.mode == "graph_informed":
                families = _ball_families(dag)
            run_dir = out_root / variant / f"run_{seed}"
            jobs.append((variant, seed, config, truth, dag, data, families, run_dir))
    threads = max(1, int(os.environ.get("GIGAN_THREADS", "1")))
    results = {}
    if threads == 1:
        for variant, seed, config, truth, dag, data, families, run_dir in jobs:
            results[(variant, seed)] = _single_run(cs.tag, variant, config, truth, dag, data, families, run_dir)
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            futures = {
                pool.submit(_single_run, cs.tag, variant, config, truth, dag, data, families, run_dir): (variant, seed)
                for variant, seed, config, truth, dag, data, families, run_dir in jobs
            }
            for future, key in futures.items():
                results[key] = future.result()

    per_variant = {}
    for (variant, seed), metrics in results.items():
        per_variant.setdefault(variant, {})[seed] = metrics
    summary = _summarize(cs.tag, per_variant)
    _write_csv(out_root / "summary.csv",
               ["case", "variant", "metric", "median", "q25", "q75", "runs", "aborted"],
               summary)
    pairs = compare_variants(per_variant)
    _write_csv(out_root / "pairs.csv",
               ["metric", "variant_a", "variant_b", "seed", "value_a", "value_b", "diff"],
               pairs["rows"])
    return summary


def _summarize(case, per_variant) -> list:
    rows = []
    for variant in sorted(per_variant):
        runs = per_variant[variant]
        aborted = sum(1 for m in runs.values() if m.get("aborted"))
        metrics = sorted({k for m in runs.values() for k in m if k != "aborted"})
        for metric in metrics:
            values = [m[metric] for m in runs.values() if metric in m and np.isfinite(m[metric])]
            if not values:
                continue
            q25, median, q75 = np.percentile(values, [25, 50, 75])
            rows.append({
                "case": case, "variant": variant, "metric": metric,
                "median": float(median), "q25": float(q25), "q75": float(q75),
                "runs": len(values), "aborted": aborted,
            })
    return rows


def compare_variants(per_variant) -> dict:
    """Paired per-seed differences and sign-test counts between variants.

    ``per_variant`` maps variant -> seed -> metric dict.  All variants
    must cover identical seed sets (runs are paired by seed); the result
    holds one row per (metric, variant pair, seed) plus a count of seeds
    where each variant came out lower.
    """
    variants = sorted(per_variant)
    if len(variants) < 2:
        raise UnpairedRuns("need at least two variants to compare")
    seed_sets = {v: set(per_variant[v]) for v in variants}
    common = seed_sets[variants[0]]
    if any(seed_sets[v] != common for v in variants):
        raise UnpairedRuns("variants were run on different seed sets")
    rows, counts = [], {}
    for ia, va in enumerate(variants):
        for vb in variants[ia + 1 :]:
            metrics = sorted(
                set.intersection(*(set(per_variant[v][s]) for v in (va, vb) for s in common))
                - {"aborted", "epochs"}
            )
            for metric in metrics:
                a_lower = b_lower = 0
                for seed in sorted(common):
                    a = per_variant[va][seed][metric]
                    b = per_variant[vb][seed][metric]
                    rows.append({
                        "metric": metric, "variant_a": va, "variant_b": vb,
                        "seed": seed, "value_a": a, "value_b": b, "diff": a - b,
                    })
                    if a < b:
                        a_lower += 1
                    elif b < a:
                        b_lower += 1
                counts[(metric, va, vb)] = (a_lower, b_lower)
    return {"rows": rows, "sign_counts": counts}


# ---------------------------------------------------------------------------
# Oracle certification case
# ---------------------------------------------------------------------------

def _run_certify(cs: CaseStudy, out_root) -> list:
    from .oracle import certify

    scale = 1 if cs.scale == "desk" else 4
    sweeps = {
        "sandwich": lambda: certify.sandwich_sweep(250 * scale, cs.base_seed),
        "duality": lambda: certify.duality_sweep(50 * scale, cs.base_seed + 1),
        "data_processing": lambda: certify.data_processing_sweep(60 * scale, cs.base_seed + 2),
        "lower_bound": lambda: certify.lower_bound_sweep(60 * scale, cs.base_seed + 3),
        "infimal": lambda: certify.infimal_sweep(12 * scale, cs.base_seed + 4),
        "pot": lambda: certify.pot_sweep(60 * scale, cs.base_seed + 5),
    }
    out_root.mkdir(parents=True, exist_ok=True)
    summary = []
    for name, sweep in sweeps.items():
        rows, failures = sweep()
        columns = sorted(rows[0]) if rows else ["trial"]
        _write_csv(out_root / f"{name}.csv", columns, rows)
        summary.append({
            "case": "certify", "variant": name, "metric": "holds",
            "median": float(failures == 0), "q25": float(failures == 0),
            "q75": float(failures == 0), "runs": len(rows), "aborted": failures,
        })
    _write_csv(out_root / "summary.csv",
               ["case", "variant", "metric", "median", "q25", "q75", "runs", "aborted"],
               summary)
    return summary
