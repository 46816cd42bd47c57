"""Liquid configuration: parameter set, validation, and the flat config-file format.

Defaults are the standard single-column liquid used throughout: 135 LIF
neurons (80% excitatory) on a 15x3x3 grid, class-wise connection
probabilities, dynamic-synapse (U, D, F) class statistics, and the
structural-plasticity kernel constants.
"""

from dataclasses import dataclass, fields, replace
import math

SYN_CLASSES = ("EE", "EI", "IE", "II")


class ConfigError(ValueError):
    """Raised for invalid or malformed liquid configurations."""


@dataclass(frozen=True)
class LiquidConfig:
    # population / topology
    n_neurons: int = 135
    excitatory_fraction: float = 0.8
    column_dims: tuple = (15, 3, 3)
    conn_prob_ee: float = 0.3
    conn_prob_ei: float = 0.2
    conn_prob_ie: float = 0.4
    conn_prob_ii: float = 0.1

    # LIF neuron
    tau_membrane_ms: float = 30.0
    input_resistance_mohm: float = 1.0
    refractory_exc_ms: float = 3.0
    refractory_inh_ms: float = 2.0
    v_threshold_mv: float = 15.0
    v_reset_mv: float = 13.5
    i_background_na: float = 13.5

    # dynamic synapse class means (U dimensionless, D/F in seconds)
    u_mean_ee: float = 0.5
    d_mean_s_ee: float = 1.1
    f_mean_s_ee: float = 0.05
    u_mean_ei: float = 0.05
    d_mean_s_ei: float = 0.125
    f_mean_s_ei: float = 1.2
    u_mean_ie: float = 0.25
    d_mean_s_ie: float = 0.7
    f_mean_s_ie: float = 0.02
    u_mean_ii: float = 0.32
    d_mean_s_ii: float = 0.144
    f_mean_s_ii: float = 0.06
    udf_std_fraction: float = 0.5

    # synaptic kinetics
    tau_syn_exc_ms: float = 3.0
    tau_syn_inh_ms: float = 6.0
    delay_ee_ms: float = 1.5
    delay_other_ms: float = 0.8

    # recurrent weight distribution (gamma magnitude, sign by pre type);
    # units are arbitrary current units, a global calibrated scale absorbs them
    w_mean_ee: float = 30.0
    w_mean_ei: float = 60.0
    w_mean_ie: float = -19.0
    w_mean_ii: float = -19.0
    w_cv: float = 0.7

    # input layer
    n_input_lines: int = 1
    input_conn_prob: float = 0.3
    input_weight: float = 60.0

    # structural plasticity
    n_candidates: int = 25
    kernel_tau_slow_ms: float = 3.0
    kernel_tau_fast_ms: float = 0.05

    # integration
    dt_ms: float = 0.1

    @property
    def n_excitatory(self) -> int:
        return int(round(self.n_neurons * self.excitatory_fraction))

    @property
    def n_inhibitory(self) -> int:
        return self.n_neurons - self.n_excitatory

    def conn_prob(self, cls: str) -> float:
        return getattr(self, f"conn_prob_{cls.lower()}")

    def udf_means(self, cls: str):
        """(U_mean, D_mean_ms, F_mean_ms) for a synapse class."""
        c = cls.lower()
        return (
            getattr(self, f"u_mean_{c}"),
            getattr(self, f"d_mean_s_{c}") * 1000.0,
            getattr(self, f"f_mean_s_{c}") * 1000.0,
        )

    def w_mean(self, cls: str) -> float:
        return getattr(self, f"w_mean_{cls.lower()}")

    def validate(self) -> None:
        if self.n_neurons < 1:
            raise ConfigError("n_neurons must be >= 1")
        if not 0.0 < self.excitatory_fraction < 1.0:
            raise ConfigError("excitatory_fraction must be in (0, 1)")
        if len(self.column_dims) != 3 or any(int(d) < 1 for d in self.column_dims):
            raise ConfigError("column_dims must be three positive counts")
        for cls in SYN_CLASSES:
            p = self.conn_prob(cls)
            if not 0.0 <= p <= 1.0:
                raise ConfigError(f"conn_prob_{cls.lower()}={p} outside [0, 1]")
        if not 0.0 <= self.input_conn_prob <= 1.0:
            raise ConfigError("input_conn_prob outside [0, 1]")
        time_constants = [
            self.tau_membrane_ms, self.tau_syn_exc_ms, self.tau_syn_inh_ms,
            self.kernel_tau_slow_ms, self.kernel_tau_fast_ms,
            self.refractory_exc_ms, self.refractory_inh_ms,
        ]
        for cls in SYN_CLASSES:
            _, d_ms, f_ms = self.udf_means(cls)
            time_constants += [d_ms, f_ms]
        if any(tc <= 0.0 for tc in time_constants):
            raise ConfigError("all time constants must be > 0")
        for cls in SYN_CLASSES:
            u, _, _ = self.udf_means(cls)
            if not 0.0 < u <= 1.0:
                raise ConfigError(f"u_mean_{cls.lower()} must be in (0, 1]")
        if self.kernel_tau_fast_ms >= self.kernel_tau_slow_ms:
            raise ConfigError("kernel_tau_fast_ms must be < kernel_tau_slow_ms")
        if self.delay_ee_ms <= 0.0 or self.delay_other_ms <= 0.0:
            raise ConfigError("delays must be > 0")
        if self.dt_ms <= 0.0:
            raise ConfigError("dt_ms must be > 0")
        if self.dt_ms >= min(min(time_constants), self.delay_ee_ms, self.delay_other_ms):
            raise ConfigError("dt_ms must be smaller than every time constant and delay")
        if self.udf_std_fraction < 0.0:
            raise ConfigError("udf_std_fraction must be >= 0")
        if self.w_mean_ee <= 0.0 or self.w_mean_ei <= 0.0:
            raise ConfigError("excitatory weight means must be > 0")
        if self.w_mean_ie >= 0.0 or self.w_mean_ii >= 0.0:
            raise ConfigError("inhibitory weight means must be < 0")
        if self.w_cv <= 0.0:
            raise ConfigError("w_cv must be > 0")
        if self.n_input_lines < 0:
            raise ConfigError("n_input_lines must be >= 0")
        if self.input_weight <= 0.0:
            raise ConfigError("input_weight must be > 0")
        if self.n_candidates < 1:
            raise ConfigError("n_candidates must be >= 1")
        if math.isnan(self.v_threshold_mv) or self.v_threshold_mv <= self.v_reset_mv:
            raise ConfigError("v_threshold_mv must exceed v_reset_mv")

    def with_overrides(self, **kwargs) -> "LiquidConfig":
        cfg = replace(self, **kwargs)
        cfg.validate()
        return cfg


_INT_FIELDS = {"n_neurons", "n_input_lines", "n_candidates"}


def config_to_text(config: LiquidConfig) -> str:
    """Flat ``key = value`` rendering, one field per line."""
    lines = []
    for f in fields(LiquidConfig):
        value = getattr(config, f.name)
        if f.name == "column_dims":
            value = " ".join(str(int(v)) for v in value)
        elif isinstance(value, float):
            value = repr(value)
        lines.append(f"{f.name} = {value}")
    return "\n".join(lines) + "\n"


def parse_config_text(text: str) -> LiquidConfig:
    """Parse the flat key-value config format. Unknown keys are an error."""
    known = {f.name for f in fields(LiquidConfig)}
    overrides = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in known:
            raise ConfigError(f"line {lineno}: unknown config key {key!r}")
        try:
            if key == "column_dims":
                parts = value.replace(",", " ").split()
                overrides[key] = tuple(int(p) for p in parts)
            elif key in _INT_FIELDS:
                overrides[key] = int(value)
            else:
                overrides[key] = float(value)
        except ValueError as exc:
            raise ConfigError(f"line {lineno}: bad value for {key}: {value!r}") from exc
    cfg = LiquidConfig(**overrides)
    cfg.validate()
    return cfg


def load_config(path) -> LiquidConfig:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_config_text(fh.read())
