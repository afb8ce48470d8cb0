"""Evaluation report, the category-entanglement probe, and exports.

The report aggregates object-level AUROC/AUPR and point-level AUROC per
category plus their unweighted mean and the across-category variance of
object AUROC. The probe freezes the trained model, fits a small category
classifier on mean-pooled reconstructed features, and reports how
classification confidence relates to reconstruction error, together with
the silhouette of the global tokens by category.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np
import torch
from torch import nn

from .cloud import DatasetManifest, PointCloud, load_ply, save_ply
from .config import RunConfig
from .exceptions import ConfigError, UndefinedMetricError
from .metrics import aupr, auroc, silhouette, spearman
from .model import PreparedSample, UnifiedModel, prepare_sample
from .train import prepare_split


def _sample_id(path: str) -> str:
    return path.replace("\\", "/").rsplit(".", 1)[0]


def evaluate_model(
    model: UnifiedModel,
    manifest: DatasetManifest,
    config: RunConfig | None = None,
    test_samples: list[PreparedSample] | None = None,
    manifest_entries=None,
    export_dir=None,
) -> dict:
    """Score the test split and compute the metrics report.

    When ``export_dir`` is set, each sample also gets a JSON score record
    and a score-annotated PLY copy for external heatmap viewing.
    """
    config = config or model.config
    if test_samples is None:
        manifest_entries = manifest.split_samples("test")
        test_samples = prepare_split(manifest, config, "test")
    elif manifest_entries is None:
        raise ValueError("manifest_entries must accompany pre-prepared samples")
    if not test_samples:
        raise ConfigError("test split is empty")
    model.eval()
    by_cat: dict[int, dict[str, list]] = {}
    for entry, sample in zip(manifest_entries, test_samples):
        result, extras = model.forward_eval(sample)
        bucket = by_cat.setdefault(
            entry.category_id,
            {"scores": [], "labels": [], "point_scores": [], "point_labels": []},
        )
        bucket["scores"].append(result.object_score)
        bucket["labels"].append(entry.object_label)
        mask = sample.cloud.mask
        point_labels = (
            mask.astype(np.int64)
            if mask is not None
            else np.zeros(sample.cloud.n_points, dtype=np.int64)
        )
        bucket["point_scores"].append(extras["point_scores"])
        bucket["point_labels"].append(point_labels)
        if export_dir is not None:
            export_dir = Path(export_dir)
            export_dir.mkdir(parents=True, exist_ok=True)
            stem = _sample_id(entry.path).replace("/", "_")
            record = {
                "sample_id": _sample_id(entry.path),
                "object_score": result.object_score,
                "category": entry.category_id,
            }
            (export_dir / f"{stem}.json").write_text(
                json.dumps(record, indent=2, sort_keys=True) + "\n"
            )
            save_ply(export_dir / f"{stem}.ply", sample.cloud, extras["point_scores"])
    categories = {}
    for cid in sorted(by_cat):
        b = by_cat[cid]
        scores = np.array(b["scores"])
        labels = np.array(b["labels"])
        point_scores = np.concatenate(b["point_scores"])
        point_labels = np.concatenate(b["point_labels"])
        entry = {
            "o_auroc": auroc(scores, labels),
            "o_aupr": aupr(scores, labels),
            "p_auroc": auroc(point_scores, point_labels),
            "n_test": int(labels.size),
        }
        categories[manifest.category_name(cid)] = entry
    names = sorted(categories)
    o_vals = np.array([categories[n]["o_auroc"] for n in names])
    report = {
        "categories": categories,
        "mean": {
            "o_auroc": float(np.mean([categories[n]["o_auroc"] for n in names])),
            "o_aupr": float(np.mean([categories[n]["o_aupr"] for n in names])),
            "p_auroc": float(np.mean([categories[n]["p_auroc"] for n in names])),
        },
        "o_auroc_variance": float(o_vals.var()),
    }
    return report


def format_report(report: dict) -> str:
    """Fixed-width table of the evaluation report."""
    header = f"{'category':<12} {'O-AUROC':>8} {'O-AUPR':>8} {'P-AUROC':>8} {'n':>4}"
    lines = [header, "-" * len(header)]
    for name in sorted(report["categories"]):
        row = report["categories"][name]
        lines.append(
            f"{name:<12} {row['o_auroc']:>8.4f} {row['o_aupr']:>8.4f} "
            f"{row['p_auroc']:>8.4f} {row['n_test']:>4d}"
        )
    mean = report["mean"]
    lines.append("-" * len(header))
    lines.append(
        f"{'mean':<12} {mean['o_auroc']:>8.4f} {mean['o_aupr']:>8.4f} "
        f"{mean['p_auroc']:>8.4f}"
    )
    lines.append(f"O-AUROC variance across categories: {report['o_auroc_variance']:.6f}")
    return "\n".join(lines)


# ---------------------------------------------------------------------------
# Entanglement probe
# ---------------------------------------------------------------------------

def _pooled_reconstruction(model: UnifiedModel, sample: PreparedSample):
    result, extras = model.forward_eval(sample)
    pooled = extras["f_hat"].mean(dim=0)
    err = float(result.raw.mean())
    return pooled, err, extras["z"]


def ice_probe(
    model: UnifiedModel,
    manifest: DatasetManifest,
    config: RunConfig | None = None,
    probe_epochs: int = 100,
    probe_seed: int = 0,
) -> dict:
    """How category-identifiable are the reconstructed features?

    A two-layer classifier is trained (model frozen) on mean-pooled
    reconstructed tokens of the training split; on normal test samples we
    report the rank correlation between its true-class confidence and the
    reconstruction error, plus probe accuracies and the silhouette of the
    global tokens by category.
    """
    config = config or model.config
    if len(manifest.categories) < 2:
        raise ConfigError("the probe needs at least 2 categories")
    model.eval()
    torch.manual_seed(probe_seed)
    train_entries = manifest.split_samples("train")
    test_entries = manifest.split_samples("test")
    train_samples = prepare_split(manifest, config, "train")
    test_samples = prepare_split(manifest, config, "test")
    feats, labels = [], []
    for sample in train_samples:
        pooled, _, _ = _pooled_reconstruction(model, sample)
        feats.append(pooled)
        labels.append(sample.label - 1)
    x = torch.stack(feats)
    y = torch.tensor(labels)
    n_cat = len(manifest.categories)
    probe = nn.Sequential(
        nn.Linear(x.shape[1], 2 * x.shape[1]), nn.ReLU(), nn.Linear(2 * x.shape[1], n_cat)
    )
    opt = torch.optim.Adam(probe.parameters(), lr=1e-3)
    ce = nn.CrossEntropyLoss()
    for _ in range(probe_epochs):
        opt.zero_grad()
        loss = ce(probe(x), y)
        loss.backward()
        opt.step()
    probe.eval()
    with torch.no_grad():
        train_acc = float((probe(x).argmax(dim=1) == y).double().mean())
    confidences, errors, zs, z_labels = [], [], [], []
    normal_correct = 0
    normal_count = 0
    for entry, sample in zip(test_entries, test_samples):
        pooled, err, z = _pooled_reconstruction(model, sample)
        zs.append(z.double().numpy())
        z_labels.append(entry.category_id)
        if entry.object_label != 0:
            continue
        with torch.no_grad():
            probs = probe(pooled).softmax(dim=0)
        confidences.append(float(probs[entry.category_id - 1]))
        errors.append(err)
        normal_correct += int(int(probs.argmax()) == entry.category_id - 1)
        normal_count += 1
    try:
        rank_corr = spearman(np.array(confidences), np.array(errors))
    except UndefinedMetricError:
        rank_corr = float("nan")
    report = {
        "probe_train_accuracy": train_acc,
        "probe_test_accuracy_normal": normal_correct / max(normal_count, 1),
        "rank_correlation_confidence_vs_error": rank_corr,
        "silhouette_z_by_category": silhouette(np.stack(zs), np.array(z_labels)),
        "n_probe_train": len(train_samples),
        "n_normal_test": normal_count,
        "pairs": [
            {"confidence": c, "error": e} for c, e in zip(confidences, errors)
        ],
    }
    return report


# ---------------------------------------------------------------------------
# Exports
# ---------------------------------------------------------------------------

def export_embeddings(
    model: UnifiedModel,
    manifest: DatasetManifest,
    config: RunConfig | None = None,
    split: str = "test",
) -> list[dict]:
    """One unit-norm global token per sample, for external projection."""
    config = config or model.config
    entries = manifest.split_samples(split)
    samples = prepare_split(manifest, config, split)
    rows = []
    model.eval()
    for entry, sample in zip(entries, samples):
        with torch.no_grad():
            enc = model.encode(sample, training=False)
        rows.append(
            {
                "sample_id": _sample_id(entry.path),
                "category": entry.category_id,
                "z": [float(v) for v in enc["z"].double()],
            }
        )
    return rows


def embeddings_json(rows: list[dict]) -> str:
    return json.dumps(rows, indent=2, sort_keys=True) + "\n"


def score_file(
    model: UnifiedModel,
    ply_path,
    config: RunConfig | None = None,
    out_json=None,
    out_ply=None,
) -> dict:
    """Score one PLY file: JSON record plus an annotated PLY copy.

    The category field holds the classifier's prediction, since a raw
    file carries no label.
    """
    config = config or model.config
    cloud, _ = load_ply(ply_path)
    sample = prepare_sample(PointCloud(cloud.points), config)
    result, extras = model.forward_eval(sample)
    with torch.no_grad():
        enc = model.encode(sample, training=False)
        predicted = int(model.cfgt.classify(enc["f_global"]).argmax()) + 1
    record = {
        "sample_id": Path(ply_path).stem,
        "object_score": result.object_score,
        "category": predicted,
        "token_scores": [float(v) for v in result.smoothed],
    }
    if out_json is not None:
        Path(out_json).write_text(json.dumps(record, indent=2, sort_keys=True) + "\n")
    if out_ply is not None:
        save_ply(out_ply, sample.cloud, extras["point_scores"])
    return record
