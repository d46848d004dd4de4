"""Run configuration: JSON config file plus command-line overrides.

Everything that can influence results is echoed verbatim into every
report so published deduplication lists stay reproducible. Worker count
is deliberately not part of the config: outputs are independent of it.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

from .dedup import FP_RULES, DedupConfig
from .hashing import DIGEST_ALGORITHM, HASH_VERSION, HashConfig

VARIANTS = ("original", "preprocessed")


class ConfigError(Exception):
    pass


@dataclass
class RunConfig:
    roots: list[tuple[str, str]] = field(default_factory=list)
    out_dir: str = "facedup-out"
    variants: list[str] = field(default_factory=lambda: ["original"])
    hash: HashConfig = field(default_factory=HashConfig)
    dedup: DedupConfig = field(default_factory=DedupConfig)
    sidecars: list[str] = field(default_factory=list)
    exclude_list: str | None = None
    eval_seed: int = 1
    fmr_targets: list[float] = field(default_factory=lambda: [1e-3, 1e-2])
    edc_range: tuple[float, float] = (0.0, 0.20)

    def validate(self) -> None:
        try:
            self.hash.validate()
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        for t in (self.dedup.t_fp, self.dedup.t_assign, self.dedup.t_margin):
            if not -1.0 <= t <= 1.0:
                raise ConfigError(f"threshold {t} outside [-1, 1]")
        if self.dedup.fp_rule not in FP_RULES:
            raise ConfigError(f"fp_rule must be one of {FP_RULES}")
        for v in self.variants:
            if v not in VARIANTS:
                raise ConfigError(f"unknown variant {v!r}")
        if not self.variants:
            raise ConfigError("at least one variant required")
        if "preprocessed" in self.variants and not self.sidecars:
            raise ConfigError("preprocessed variant needs sidecar files for landmarks")
        seen = set()
        for name, _path in self.roots:
            if name in seen:
                raise ConfigError(f"duplicate dataset id {name!r}")
            seen.add(name)
        if not 0.0 <= self.edc_range[0] < self.edc_range[1] <= 1.0:
            raise ConfigError(f"bad EDC discard range {self.edc_range}")

    def echo(self) -> dict:
        """Effective config for report embedding (deterministic content)."""
        return {
            "roots": [[name, str(path)] for name, path in self.roots],
            "variants": list(self.variants),
            "hash": asdict(self.hash),
            "thresholds": asdict(self.dedup),
            "sidecars": list(self.sidecars),
            "exclude_list": self.exclude_list,
            "eval_seed": self.eval_seed,
            "fmr_targets": list(self.fmr_targets),
            "edc_range": list(self.edc_range),
            "digest_algorithm": DIGEST_ALGORITHM,
            "hash_version": HASH_VERSION,
        }

    @classmethod
    def from_file(cls, path: str | Path) -> "RunConfig":
        try:
            raw = json.loads(Path(path).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        return cls.from_dict(raw)

    @classmethod
    def from_dict(cls, raw: dict) -> "RunConfig":
        cfg = cls()
        roots = raw.get("roots", {})
        if isinstance(roots, dict):
            cfg.roots = sorted((str(k), str(v)) for k, v in roots.items())
        else:
            cfg.roots = [(str(a), str(b)) for a, b in roots]
        cfg.out_dir = str(raw.get("out_dir", cfg.out_dir))
        cfg.variants = list(raw.get("variants", cfg.variants))
        for key, value in raw.get("hash", {}).items():
            if not hasattr(cfg.hash, key):
                raise ConfigError(f"unknown hash option {key!r}")
            setattr(cfg.hash, key, value)
        thresholds = raw.get("thresholds", {})
        cfg.dedup = DedupConfig(
            t_fp=float(thresholds.get("t_fp", cfg.dedup.t_fp)),
            t_assign=float(thresholds.get("t_assign", cfg.dedup.t_assign)),
            t_margin=float(thresholds.get("t_margin", cfg.dedup.t_margin)),
            fp_rule=str(thresholds.get("fp_rule", cfg.dedup.fp_rule)),
        )
        cfg.sidecars = [str(p) for p in raw.get("sidecars", [])]
        cfg.exclude_list = raw.get("exclude_list")
        ev = raw.get("eval", {})
        cfg.eval_seed = int(ev.get("seed", cfg.eval_seed))
        cfg.fmr_targets = [float(x) for x in ev.get("fmr_targets", cfg.fmr_targets)]
        if "edc_range" in ev:
            lo, hi = ev["edc_range"]
            cfg.edc_range = (float(lo), float(hi))
        return cfg
