"""Experiment configuration files (YAML or JSON) and their schema.

Every section rejects unknown keys.  Validation errors report the key path,
and the line number when the file is YAML and the key can be located.
"""
import json
import os
from typing import List, Literal, Optional, Tuple

import numpy as np
import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from .camera_model import CameraConfig
from .exceptions import ConfigError
from .protocols import BUILTIN_NAMES, PhaseTable, ProtocolSpec, builtin_protocol
from .pulse_engine import DephasingModel
from .sample_model import GridConfig
from .spin_core import NVConstants


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid")


class SampleSection(_Section):
    width: int = Field(32, ge=1)
    height: int = Field(32, ge=1)
    pixel_pitch: Tuple[float, float] = (2.5e-6, 2.4e-6)
    thickness: float = Field(1e-6, gt=0)
    bias_field: float = 5e-3
    bias_gradient: float = Field(1.4e-6, ge=0)
    rabi_nominal: float = Field(5e6, gt=0)
    rabi_gradient: float = Field(0.04, ge=0, le=0.5)
    stress_amplitude: float = Field(1e5, ge=0)
    transverse_amplitude: float = Field(1e5, ge=0)
    stress_correlation: float = Field(10e-6, gt=0)
    gradient_coupling: float = Field(2.0, ge=0)
    stress_map: Optional[str] = None
    amplitude: float = Field(2e4, ge=0)
    beam_waist: float = Field(600e-6, ge=0)
    contrast: float = Field(0.03, gt=0, lt=1)
    t2_star_sq: float = Field(1.24e-6, gt=0)
    hyperfine_populations: Tuple[float, float, float] = (1 / 3, 1 / 3, 1 / 3)
    seed: int = 0


class ConstantsSection(_Section):
    zero_field_splitting: float = 2.87e9
    gyromagnetic_ratio: float = 28.03e9
    hyperfine_splitting: float = 2.2e6
    delta_d: float = 0.0


class ProtocolSection(_Section):
    kind: Optional[str] = "dq_4ramsey"
    name: Optional[str] = None
    basis: Optional[Literal["SQ", "DQ"]] = None
    phases: Optional[List[List[List[float]]]] = None
    phases_deg: Optional[List[List[List[float]]]] = None
    weights: Optional[List[float]] = None
    normalization: Literal["difference-over-sum", "raw-difference"] = "difference-over-sum"

    @model_validator(mode="after")
    def _one_source(self):
        explicit = self.phases is not None or self.phases_deg is not None
        if self.phases is not None and self.phases_deg is not None:
            raise ValueError("give phases or phases_deg, not both")
        if explicit:
            if self.basis is None or self.weights is None:
                raise ValueError("an explicit phase table needs basis and weights")
        elif self.kind not in BUILTIN_NAMES:
            raise ValueError(f"kind must be one of {BUILTIN_NAMES}")
        return self

    @property
    def is_builtin(self):
        return self.phases is None and self.phases_deg is None

    def build(self):
        if self.is_builtin:
            return builtin_protocol(self.kind, self.normalization)
        ph = np.deg2rad(self.phases_deg) if self.phases_deg is not None else np.asarray(self.phases)
        return ProtocolSpec(self.name or "custom", self.basis, PhaseTable(ph),
                            tuple(self.weights), self.normalization)


class DephasingSection(_Section):
    mode: Literal["analytic-envelope", "monte-carlo-bath", "analytic", "monte-carlo"] = \
        "analytic-envelope"
    t2_star_sq: float = Field(1.24e-6, gt=0)
    p: float = 1.0
    bath_samples: int = Field(10000, ge=1)
    seed: int = 0


class CameraSection(_Section):
    f_demod: Optional[float] = Field(None, gt=0)
    n_demod: int = Field(24, ge=1)
    bit_depth: int = 10
    t_init_read: float = Field(4e-6, ge=0)
    delay_budget: float = Field(8e-6, ge=0)
    mw_budget: float = Field(1e-6, ge=0)
    buffer_frames: int = Field(500, ge=1)
    full_scale: float = Field(67000.0, gt=0)
    read_noise: float = Field(0.0, ge=0)
    shot_noise: bool = True
    max_frame_rate: float = Field(3.8e3, gt=0)


class SweepSection(_Section):
    mode: Optional[Literal["common", "differential"]] = None
    range: float = Field(1e6, gt=0)
    points: int = Field(201, ge=3)
    window: float = Field(100e3, gt=0)
    tau: Optional[float] = Field(None, gt=0)
    rabi_error: float = Field(0.04, gt=-1)


class TauAxis(_Section):
    start: float = Field(20e-9, ge=0)
    stop: float = Field(3e-6, gt=0)
    points: int = Field(150, ge=12)

    def values(self):
        return np.linspace(self.start, self.stop, self.points)


class RunSection(_Section):
    acquisition: Literal["time-series", "fringe"] = "time-series"
    frames: int = Field(1250, ge=1)
    seed: int = 0
    output: str = "out"
    tau: Optional[float] = Field(None, gt=0)
    fringe_detuning: float = -3e6
    frames_per_point: int = Field(16, ge=1)
    tau_axis: TauAxis = TauAxis()


class FitSection(_Section):
    series: Optional[str] = None
    tau_axis: Optional[str] = None
    hyperfine_spacing: Optional[float] = Field(None, gt=0)
    basis: Optional[Literal["SQ", "DQ"]] = None


class AnalyzeSection(_Section):
    series: Optional[str] = None
    calibration: Optional[str] = None
    series_sq: Optional[str] = None
    calibration_sq: Optional[str] = None
    allan_pixels: int = Field(50, ge=1)


class ExperimentConfig(_Section):
    sample: SampleSection = SampleSection()
    constants: ConstantsSection = ConstantsSection()
    protocol: ProtocolSection = ProtocolSection()
    dephasing: DephasingSection = DephasingSection()
    camera: CameraSection = CameraSection()
    sweep: SweepSection = SweepSection()
    run: RunSection = RunSection()
    fit: FitSection = FitSection()
    analyze: AnalyzeSection = AnalyzeSection()

    # -- conversions into library objects --------------------------------
    def nv_constants(self):
        return NVConstants(**self.constants.model_dump())

    def grid_config(self, seed=None):
        d = self.sample.model_dump(exclude={"stress_map"})
        if seed is not None:
            d["seed"] = seed
        return GridConfig(delta_d=self.constants.delta_d, constants=self.nv_constants(), **d)

    def dephasing_model(self):
        return DephasingModel(**self.dephasing.model_dump())

    def camera_config(self):
        return CameraConfig(**self.camera.model_dump())


def _yaml_line(text, loc):
    """Best-effort line number of a key path in YAML text."""
    try:
        node = yaml.compose(text)
    except yaml.YAMLError:
        return None
    line = None
    for key in loc:
        if node is None:
            break
        if isinstance(node, yaml.MappingNode):
            nxt = None
            for k, v in node.value:
                if k.value == str(key):
                    line, nxt = k.start_mark.line + 1, v
                    break
            node = nxt
        elif isinstance(node, yaml.SequenceNode) and isinstance(key, int) and key < len(node.value):
            node = node.value[key]
            line = node.start_mark.line + 1
        else:
            break
    return line


def parse_config(text, source="<string>"):
    """Parse and validate configuration text (YAML, of which JSON is a subset)."""
    try:
        data = yaml.safe_load(text) if text.strip() else {}
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f" line {mark.line + 1}" if mark is not None else ""
        raise ConfigError(f"{source}:{where} cannot parse config: {exc}") from None
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError(f"{source}: top level must be a mapping")
    try:
        return ExperimentConfig.model_validate(data)
    except ValidationError as exc:
        msgs = []
        for err in exc.errors():
            loc = tuple(err["loc"])
            path = ".".join(str(x) for x in loc) or "<root>"
            line = _yaml_line(text, loc)
            where = f" (line {line})" if line else ""
            msgs.append(f"{source}: {path}{where}: {err['msg']}")
        raise ConfigError("\n".join(msgs)) from None


def load_config(path):
    if not os.path.exists(path):
        raise ConfigError(f"config file {path} not found")
    with open(path) as fh:
        return parse_config(fh.read(), source=os.fspath(path))


def config_schema():
    return ExperimentConfig.model_json_schema()


def dump_config(cfg):
    return json.dumps(cfg.model_dump(), indent=2)
