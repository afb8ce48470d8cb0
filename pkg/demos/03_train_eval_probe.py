"""End-to-end run at toy scale: generate, train, evaluate, probe.

Uses a deliberately small profile (g=64, 40 epochs) so the whole thing
finishes in about a minute. The desk profile in config.py is the one the
benchmark uses; this script is about watching the moving parts, not the
numbers.
"""

from pcad.config import desk_profile
from pcad.evaluate import evaluate_model, format_report, ice_probe
from pcad.synth import DatasetConfig, build_dataset
from pcad.train import train


def main():
    data_cfg = DatasetConfig(
        out_dir="demo_run_data",
        categories=["sphere", "box"],
        n_points=512,
        train_per_category=4,
        test_per_category=4,
        seed=5,
    )
    manifest = build_dataset(data_cfg)
    print(f"dataset: {len(manifest.split_samples('train'))} train / "
          f"{len(manifest.split_samples('test'))} test clouds")

    cfg = desk_profile(g=64, epochs=40, seed=0)
    result = train(cfg, manifest, log=lambda msg: None)
    print(f"trained {result.steps} steps; "
          f"loss {result.history[0]:.3f} -> {result.history[-1]:.3f}")

    report = evaluate_model(result.model, manifest)
    print("\n" + format_report(report))

    probe = ice_probe(result.model, manifest, probe_epochs=50)
    chance = 1.0 / len(manifest.category_ids())
    print(f"\nICE probe: test accuracy {probe['probe_test_accuracy_normal']:.2f} "
          f"(chance {chance:.2f}), "
          f"silhouette {probe['silhouette_z_by_category']:.3f}, "
          f"confidence/error rank corr "
          f"{probe['rank_correlation_confidence_vs_error']:.3f}")


if __name__ == "__main__":
    main()
