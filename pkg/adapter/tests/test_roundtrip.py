"""Adapter acceptance: sidecars from a real 20-image set pass selfcheck,
load in the dedup engine with zero violations, and the landmark-failure
skip list matches the extraction report exactly."""

import numpy as np

from facedup_adapter.cli import main
from facedup_adapter.extract import extract
from facedup_adapter.providers import AdapterConfig
from facedup_adapter.sidecar import selfcheck


def test_extract_roundtrip_into_engine(image_set, tmp_path):
    out = tmp_path / "features.tsv"
    report = extract(image_set, "set", out, AdapterConfig())
    assert report.images == 20
    assert report.unreadable == []
    # the classical provider must exercise both outcomes on this set
    assert report.detected >= 1
    assert len(report.landmark_failures) >= 1
    assert report.detected + len(report.landmark_failures) == 20

    check = selfcheck(out)
    assert check.ok, [str(v) for v in check.violations]
    assert check.records == 20

    # the primary engine loads the file losslessly, no warnings
    from facedup.features import load_sidecars

    store = load_sidecars([out])
    assert len(store) == 20
    assert store.warnings == []

    # skip-list consistency: exactly the reported failures lack landmarks
    failed = {i for i in (f"set/{p.relative_to(image_set).as_posix()}"
                          for p in sorted(image_set.rglob("*.png")))
              if not store.has_landmarks(i)}
    assert failed == set(report.landmark_failures)

    # detected records carry a unit embedding and a finite quality
    for image_id in store.records:
        rec = store.get(image_id)
        if store.has_landmarks(image_id):
            assert rec.embedding is not None
            assert abs(float(np.linalg.norm(rec.embedding)) - 1.0) < 1e-6
            assert rec.quality is not None and np.isfinite(rec.quality)
        else:
            assert rec.embedding is None
            assert rec.quality is None

    print(
        f"adapter round-trip: {report.detected} detected, "
        f"{len(report.landmark_failures)} on the skip list, zero violations"
    )


def test_cli_extract_and_selfcheck(image_set, tmp_path, capsys):
    out = tmp_path / "f.tsv"
    rc = main(["extract", "--root", str(image_set), "--dataset-id", "set",
               "--out", str(out)])
    assert rc == 0
    assert main(["selfcheck", str(out)]) == 0
    printed = capsys.readouterr().out
    assert "no violations" in printed


def test_engine_scan_consumes_adapter_sidecar(image_set, tmp_path):
    """End-to-end over the external interfaces: adapter sidecar feeds the
    engine's preprocessed-variant scan; landmark failures land on the
    engine's skip list."""
    out_sidecar = tmp_path / "features.tsv"
    report = extract(image_set, "set", out_sidecar, AdapterConfig())

    from facedup.cli import main as engine_main

    out = tmp_path / "out"
    rc = engine_main([
        "scan", "--root", f"set={image_set}", "--out", str(out),
        "--variants", "original,preprocessed", "--sidecar", str(out_sidecar),
    ])
    assert rc == 0
    skip = (out / "skiplist.txt").read_text().splitlines()
    skipped_ids = {line.split("\t")[0] for line in skip if line.endswith("landmark_failure")}
    assert skipped_ids == set(report.landmark_failures)
