"""Scenario configuration and its sectioned key = value file format."""
from __future__ import annotations

import configparser
import dataclasses
import math
from dataclasses import dataclass, field, fields
from pathlib import Path

from .slicing import EMBB, URLLC, SliceConfig

SECTIONS = {
    "cell": ["total_rbs", "rb_bandwidth_hz", "tti_ms", "window_ttis", "episode_windows", "tx_power_dbm",
             "noise_psd_dbm_hz", "error_prob", "symbols_per_rb_tti", "s_max"],
    "radio_map": ["shadow_sigma_db", "decorrelation_m", "map_cell_m"],
    "mobility": ["n_embb_ues", "vehicle_rate", "mobility_step_ttis", "mobility_warmup_s", "ped_half_width_m"],
    "slices": ["embb_rate_req", "embb_sla", "embb_iso", "embb_alpha",
               "urllc_max_delay", "urllc_sla", "urllc_iso", "urllc_alpha"],
    "traffic": ["trace_path", "trace_base_bits", "trace_amp_bits", "trace_period", "trace_ar_coef",
                "trace_noise_bits"],
    "agent": ["hidden_sizes", "lr", "replay_capacity", "batch_size", "target_sync", "eps_start", "eps_end",
              "eps_decay_windows", "gamma", "beta", "rho", "warmup_windows", "train_steps_per_window",
              "initial_common_frac", "hard_mode", "hard_initial_frac", "max_ues_norm", "max_bin_demand_norm"],
    "predict": ["history", "lstm_hidden", "lstm_lr", "lstm_epochs", "lstm_batch", "predictor_vehicles",
                "predictor_windows", "predictor_max_samples", "gain_bins"],
    "harness": ["op_grid_step", "tail_windows", "fixed_allocation", "seed_scenario", "seed_agent", "seed_trace"],
}


@dataclass
class ScenarioConfig:
    total_rbs: int = 20
    rb_bandwidth_hz: float = 180e3
    tti_ms: float = 1.0
    window_ttis: int = 1000
    episode_windows: int = 2000
    tx_power_dbm: float = 43.0
    noise_psd_dbm_hz: float = -174.0
    error_prob: float = 1e-5
    symbols_per_rb_tti: int = 168
    s_max: float = math.log2(1.0 + 10 ** 1.4)

    shadow_sigma_db: float = 8.0
    decorrelation_m: float = 50.0
    map_cell_m: float = 1.0

    n_embb_ues: int = 5
    vehicle_rate: float = 0.2
    mobility_step_ttis: int = 100
    mobility_warmup_s: float = 600.0
    ped_half_width_m: float = 300.0

    embb_rate_req: float = 5e6
    embb_sla: float = 0.95
    embb_iso: float = 0.9
    embb_alpha: float = 2.0
    urllc_max_delay: int = 5
    urllc_sla: float = 0.9999
    urllc_iso: float = 0.9
    urllc_alpha: float = 3.0

    trace_path: str = ""
    trace_base_bits: float = 5e6
    trace_amp_bits: float = 1e6
    trace_period: float = 60.0
    trace_ar_coef: float = 0.8
    trace_noise_bits: float = 5e5

    hidden_sizes: tuple = (128, 64)
    lr: float = 1e-3
    replay_capacity: int = 10_000
    batch_size: int = 32
    target_sync: int = 100
    eps_start: float = 1.0
    eps_end: float = 0.05
    eps_decay_windows: int = 1000
    gamma: float = 0.9
    beta: float = 5.0
    rho: float = 15.0
    warmup_windows: int = 100
    train_steps_per_window: int = 16
    initial_common_frac: float = 0.4
    hard_mode: bool = False
    hard_initial_frac: float = 0.6
    max_ues_norm: float = 30.0
    max_bin_demand_norm: float = 4e7

    history: int = 10
    lstm_hidden: int = 64
    lstm_lr: float = 1e-3
    lstm_epochs: int = 100
    lstm_batch: int = 256
    predictor_vehicles: int = 600
    predictor_windows: int = 1000
    predictor_max_samples: int = 20_000
    gain_bins: tuple = (0.0, 2.0, 4.0, 6.0, 8.0, 10.0, 12.0, 14.0)

    op_grid_step: int = 2
    tail_windows: int = 200
    fixed_allocation: tuple = ()
    seed_scenario: int = 0
    seed_agent: int = 0
    seed_trace: int = 0

    def __post_init__(self):
        self.validate()

    def validate(self):
        if self.total_rbs <= 0 or self.window_ttis < 1 or self.episode_windows < 1:
            raise ValueError("total_rbs, window_ttis and episode_windows must be positive")
        if self.mobility_step_ttis < 1 or self.window_ttis % self.mobility_step_ttis:
            raise ValueError("mobility_step_ttis must divide window_ttis")
        if self.trace_path and not Path(self.trace_path).exists():
            raise ValueError(f"trace file not found: {self.trace_path}")
        if list(self.gain_bins) != sorted(set(self.gain_bins)):
            raise ValueError("gain_bins must be strictly increasing")
        if self.fixed_allocation and (len(self.fixed_allocation) != 3 or sum(self.fixed_allocation) != self.total_rbs
                                      or min(self.fixed_allocation) < 0):
            raise ValueError("fixed_allocation must be three non-negative RB counts summing to total_rbs")
        if self.op_grid_step < 1:
            raise ValueError("op_grid_step must be positive")

    @classmethod
    def full_scale(cls, **overrides):
        base = dict(total_rbs=100, n_embb_ues=20, vehicle_rate=1.0, episode_windows=8050,
                    eps_decay_windows=2000, op_grid_step=5, tail_windows=50, max_ues_norm=100.0,
                    max_bin_demand_norm=1.5e8, predictor_vehicles=6000)
        base.update(overrides)
        return cls(**base)

    @property
    def window_s(self) -> float:
        return self.window_ttis * self.tti_ms / 1000.0

    @property
    def tti_s(self) -> float:
        return self.tti_ms / 1000.0

    @property
    def noise_per_rb_dbm(self) -> float:
        return self.noise_psd_dbm_hz + 10.0 * math.log10(self.rb_bandwidth_hz)

    @property
    def bandwidth_hz(self) -> float:
        return self.total_rbs * self.rb_bandwidth_hz

    @property
    def seeds(self):
        return (self.seed_scenario, self.seed_agent, self.seed_trace)

    def slices(self):
        return (SliceConfig(0, EMBB, rate_req=self.embb_rate_req, sla_threshold=self.embb_sla,
                            isolation_threshold=self.embb_iso, alpha=self.embb_alpha),
                SliceConfig(1, URLLC, max_delay=self.urllc_max_delay, sla_threshold=self.urllc_sla,
                            isolation_threshold=self.urllc_iso, alpha=self.urllc_alpha))

    def replace(self, **changes) -> "ScenarioConfig":
        return dataclasses.replace(self, **changes)

    def to_ini(self) -> str:
        cp = configparser.ConfigParser()
        values = dataclasses.asdict(self)
        for sec, keys in SECTIONS.items():
            cp[sec] = {k: _fmt(values[k]) for k in keys}
        from io import StringIO
        buf = StringIO()
        cp.write(buf)
        return buf.getvalue()

    def save(self, path):
        Path(path).write_text(self.to_ini())

    @classmethod
    def from_ini(cls, text: str, base: "ScenarioConfig | None" = None) -> "ScenarioConfig":
        cp = configparser.ConfigParser()
        cp.read_string(text)
        defaults = dataclasses.asdict(base or cls())
        types = {f.name: type(defaults[f.name]) for f in fields(cls)}
        changes = {}
        for sec in cp.sections():
            for key, raw in cp[sec].items():
                if key not in types:
                    raise ValueError(f"unknown config key {sec}.{key}")
                changes[key] = _parse(raw, types[key])
        defaults.update(changes)
        return cls(**defaults)

    @classmethod
    def load(cls, path) -> "ScenarioConfig":
        text = Path(path).read_text()
        cp = configparser.ConfigParser()
        cp.read_string(text)
        base = cls.full_scale() if cp.has_option("harness", "scale") and cp["harness"]["scale"] == "full" else None
        if base is not None:
            cp.remove_option("harness", "scale")
            from io import StringIO
            buf = StringIO()
            cp.write(buf)
            text = buf.getvalue()
        return cls.from_ini(text, base)


def _fmt(v) -> str:
    if isinstance(v, (tuple, list)):
        return ", ".join(repr(x) for x in v)
    return repr(v) if isinstance(v, float) else str(v)


def _parse(raw: str, typ):
    raw = raw.strip()
    if typ is bool:
        return raw.lower() in ("1", "true", "yes", "on")
    if typ is tuple:
        return tuple(float(x) if "." in x or "e" in x.lower() else int(x) for x in raw.split(",") if x.strip())
    if typ is int:
        return int(float(raw))
    if typ is float:
        return float(raw)
    return raw
