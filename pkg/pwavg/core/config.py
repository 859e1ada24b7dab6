"""Configuration management for pwavg."""

import os
import yaml
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Union
from pydantic import BaseModel, validator


def _positive(cls, v):
    if v is not None and v <= 0:
        raise ValueError('Tolerances and limits must be positive')
    return v


class IntegratorConfig(BaseModel):
    """Piecewise integrator settings."""
    rtol: float = 1e-10
    atol: float = 1e-12
    tol_event: float = 1e-12
    tol_transversal: float = 1e-8
    tol_surface: float = 1e-9
    tol_grad: float = 1e-8
    max_events: int = 1000
    max_steps: int = 200000
    probe_step: float = 1e-7  # fraction of the period
    max_step: Optional[float] = None

    _check_positive = validator(
        'rtol', 'atol', 'tol_event', 'tol_transversal', 'tol_surface', 'tol_grad',
        'max_events', 'max_steps', 'probe_step', 'max_step', allow_reuse=True,
    )(_positive)

    def tightened(self, factor: float = 10.0) -> 'IntegratorConfig':
        """Copy with rtol/atol divided by factor (certificate re-integration)."""
        return self.copy(update={"rtol": self.rtol / factor, "atol": self.atol / factor})


class AveragingConfig(BaseModel):
    """Averaged-function sampling, hypothesis checks and zero finding."""
    grid: int = 50
    periodicity_tol: float = 1e-8
    h2_tol: float = 1e-8
    h3_tol: float = 1e-7
    zero_tol: float = 1e-10
    margin_tol: float = 1e-8
    dedup_radius: float = 1e-6
    fd_step: float = 1e-6
    newton_max_iter: int = 50

    _check_positive = validator(
        'grid', 'periodicity_tol', 'h2_tol', 'h3_tol', 'zero_tol', 'margin_tol',
        'dedup_radius', 'fd_step', 'newton_max_iter', allow_reuse=True,
    )(_positive)

    @validator('grid')
    def validate_grid(cls, v):
        if v < 2:
            raise ValueError('grid needs at least 2 points per axis')
        return v


class DegreeConfig(BaseModel):
    """Brouwer degree computation."""
    initial_samples: int = 64
    max_samples: int = 65536
    face_samples: int = 9

    _check_positive = validator(
        'initial_samples', 'max_samples', 'face_samples', allow_reuse=True,
    )(_positive)


class ShootingConfig(BaseModel):
    """Newton shooting on the time-T map and epsilon sweeps."""
    newton_tol: float = 1e-10
    max_iter: int = 50
    fd_step: float = 1e-7
    damping: float = 1.0
    max_halvings: int = 20
    eps_list: List[float] = [1e-1, 1e-2, 1e-3, 1e-4]
    certify_tol: float = 1e-10
    lipschitz_samples: int = 32

    _check_positive = validator(
        'newton_tol', 'max_iter', 'fd_step', 'damping', 'max_halvings',
        'certify_tol', 'lipschitz_samples', allow_reuse=True,
    )(_positive)

    @validator('eps_list')
    def validate_eps_list(cls, v):
        if not v:
            raise ValueError('eps_list must not be empty')
        if any(e <= 0 for e in v):
            raise ValueError('eps_list entries must be positive')
        if any(b >= a for a, b in zip(v, v[1:])):
            raise ValueError('eps_list must be strictly decreasing')
        return v


class OutputConfig(BaseModel):
    """Report output settings."""
    directory: str = "results"
    formats: List[str] = ["csv", "json"]

    @validator('formats', each_item=True)
    def validate_format(cls, v):
        if v not in ("csv", "json"):
            raise ValueError(f'Unknown output format: {v}')
        return v


class RuntimeConfig(BaseModel):
    """Worker count and random seed."""
    threads: Optional[int] = None
    seed: int = 0

    _check_positive = validator('threads', allow_reuse=True)(_positive)

    def worker_count(self) -> int:
        """Effective worker count: explicit setting, else PWAVG_THREADS, else CPU count."""
        limit = os.environ.get("PWAVG_THREADS")
        cap = int(limit) if limit and limit.isdigit() and int(limit) > 0 else None
        workers = self.threads or cap or os.cpu_count() or 1
        return min(workers, cap) if cap else workers


class LoggingConfig(BaseModel):
    """Logging configuration."""
    level: str = "INFO"
    file: Optional[str] = "logs/pwavg.log"
    max_size: str = "10 MB"
    backup_count: int = 5


class RunConfig(BaseModel):
    """Main configuration class; every module reads its tolerances from here."""
    integrator: IntegratorConfig = IntegratorConfig()
    averaging: AveragingConfig = AveragingConfig()
    degree: DegreeConfig = DegreeConfig()
    shooting: ShootingConfig = ShootingConfig()
    output: OutputConfig = OutputConfig()
    runtime: RuntimeConfig = RuntimeConfig()
    logging: LoggingConfig = LoggingConfig()

    @classmethod
    def from_yaml(cls, config_path: Union[str, Path]) -> 'RunConfig':
        """Load configuration from YAML file."""
        config_file = Path(config_path)
        if not config_file.exists():
            raise FileNotFoundError(f"Config file not found: {config_path}")

        with open(config_file, 'r') as f:
            config_data = yaml.safe_load(f) or {}

        return cls(**config_data)

    def to_yaml(self, config_path: Union[str, Path]) -> None:
        """Save configuration to YAML file."""
        config_file = Path(config_path)
        config_file.parent.mkdir(parents=True, exist_ok=True)

        with open(config_file, 'w') as f:
            yaml.dump(self.dict(), f, default_flow_style=False, indent=2)

    def update_section(self, section: str, **kwargs) -> 'RunConfig':
        """Update one section and return a new config; self is unchanged."""
        current = getattr(self, section, None)
        if not isinstance(current, BaseModel):
            raise ValueError(f"Unknown config section: {section}")
        section_dict = current.dict()
        unknown = set(kwargs) - set(section_dict)
        if unknown:
            raise ValueError(f"Unknown key(s) for section {section}: {', '.join(sorted(unknown))}")
        section_dict.update(kwargs)

        new_config = self.copy(deep=True)
        setattr(new_config, section, type(current)(**section_dict))
        return new_config

    def with_overrides(self, overrides: Sequence[str]) -> 'RunConfig':
        """Apply ``section.key=value`` overrides (values parsed as YAML scalars)."""
        config = self
        for item in overrides:
            if "=" not in item or "." not in item.split("=", 1)[0]:
                raise ValueError(f"Override must look like section.key=value: {item!r}")
            path, raw = item.split("=", 1)
            section, key = path.split(".", 1)
            config = config.update_section(section.strip(), **{key.strip(): yaml.safe_load(raw)})
        return config

    def effective(self) -> Dict[str, Any]:
        """Plain-dict form embedded into every report."""
        return self.dict()
