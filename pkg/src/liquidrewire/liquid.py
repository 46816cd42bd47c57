"""Liquid topology: construction, validation, and the text connection table.

A liquid is an immutable value: population metadata plus two synapse tables
(recurrent and input) stored as parallel numpy arrays. Training operations
never mutate a liquid in place; they return a new one. The recurrent table is
kept in canonical (pre, post) order so that identical liquids serialize to
identical bytes.
"""

from dataclasses import dataclass, field
import io

import numpy as np

from .config import LiquidConfig, ConfigError, config_to_text, parse_config_text

# synapse class codes
EE, EI, IE, II = 0, 1, 2, 3
CLASS_NAMES = ("EE", "EI", "IE", "II")
CLASS_CODES = {name: code for code, name in enumerate(CLASS_NAMES)}

_FLOAT_FMT = ".17g"  # round-trips float64 exactly


class LiquidValidationError(ValueError):
    """Raised when a liquid violates a structural invariant."""


class TableParseError(ValueError):
    """Raised for malformed connection-table text."""


@dataclass
class Liquid:
    config: LiquidConfig
    seed: int
    is_exc: np.ndarray          # (L,) bool
    positions: np.ndarray       # (L, 3) int
    syn_pre: np.ndarray         # (S,) int32, recurrent pre neuron
    syn_post: np.ndarray        # (S,) int32
    syn_class: np.ndarray       # (S,) int8, EE/EI/IE/II
    syn_w: np.ndarray           # (S,) float64, signed current units
    syn_delay_ms: np.ndarray    # (S,) float64
    syn_tau_ms: np.ndarray      # (S,) float64
    syn_u_base: np.ndarray      # (S,) float64, U
    syn_d_ms: np.ndarray        # (S,) float64, depression recovery
    syn_f_ms: np.ndarray        # (S,) float64, facilitation decay
    in_line: np.ndarray = field(default_factory=lambda: np.zeros(0, np.int32))
    in_post: np.ndarray = field(default_factory=lambda: np.zeros(0, np.int32))
    in_w: np.ndarray = field(default_factory=lambda: np.zeros(0, np.float64))
    in_delay_ms: np.ndarray = field(default_factory=lambda: np.zeros(0, np.float64))
    in_tau_ms: np.ndarray = field(default_factory=lambda: np.zeros(0, np.float64))

    @property
    def n_neurons(self) -> int:
        return int(self.is_exc.shape[0])

    @property
    def n_synapses(self) -> int:
        return int(self.syn_pre.shape[0])

    @property
    def n_excitatory(self) -> int:
        return int(np.count_nonzero(self.is_exc))

    def exc_ids(self) -> np.ndarray:
        return np.flatnonzero(self.is_exc)

    def ee_indices(self) -> np.ndarray:
        """Indices of excitatory->excitatory synapses (the plastic set)."""
        return np.flatnonzero(self.syn_class == EE)

    def input_connected_mask(self) -> np.ndarray:
        """Boolean per neuron: receives at least one input line."""
        mask = np.zeros(self.n_neurons, dtype=bool)
        mask[self.in_post] = True
        return mask

    def ee_out_degree(self) -> np.ndarray:
        """Per neuron: number of EE synapses with that neuron as pre."""
        ee = self.ee_indices()
        return np.bincount(self.syn_pre[ee], minlength=self.n_neurons)

    def ee_in_degree(self) -> np.ndarray:
        ee = self.ee_indices()
        return np.bincount(self.syn_post[ee], minlength=self.n_neurons)

    def param_multiset(self) -> np.ndarray:
        """Sorted (w, delay, tau, U, D, F) rows; invariant under rewiring."""
        rows = np.column_stack([
            self.syn_w, self.syn_delay_ms, self.syn_tau_ms,
            self.syn_u_base, self.syn_d_ms, self.syn_f_ms,
        ])
        order = np.lexsort(rows.T[::-1])
        return rows[order]

    def copy(self) -> "Liquid":
        return Liquid(
            config=self.config, seed=self.seed,
            is_exc=self.is_exc.copy(), positions=self.positions.copy(),
            syn_pre=self.syn_pre.copy(), syn_post=self.syn_post.copy(),
            syn_class=self.syn_class.copy(), syn_w=self.syn_w.copy(),
            syn_delay_ms=self.syn_delay_ms.copy(), syn_tau_ms=self.syn_tau_ms.copy(),
            syn_u_base=self.syn_u_base.copy(), syn_d_ms=self.syn_d_ms.copy(),
            syn_f_ms=self.syn_f_ms.copy(),
            in_line=self.in_line.copy(), in_post=self.in_post.copy(),
            in_w=self.in_w.copy(), in_delay_ms=self.in_delay_ms.copy(),
            in_tau_ms=self.in_tau_ms.copy(),
        )

    def equals(self, other: "Liquid") -> bool:
        if self.config != other.config or self.seed != other.seed:
            return False
        arrays = (
            "is_exc", "positions", "syn_pre", "syn_post", "syn_class", "syn_w",
            "syn_delay_ms", "syn_tau_ms", "syn_u_base", "syn_d_ms", "syn_f_ms",
            "in_line", "in_post", "in_w", "in_delay_ms", "in_tau_ms",
        )
        return all(np.array_equal(getattr(self, a), getattr(other, a)) for a in arrays)

    def canonicalized(self) -> "Liquid":
        """Return a copy with recurrent synapses sorted by (pre, post)."""
        order = np.lexsort((self.syn_post, self.syn_pre))
        out = self.copy()
        for name in ("syn_pre", "syn_post", "syn_class", "syn_w", "syn_delay_ms",
                     "syn_tau_ms", "syn_u_base", "syn_d_ms", "syn_f_ms"):
            setattr(out, name, getattr(self, name)[order].copy())
        return out


def _class_of(is_exc: np.ndarray, pre: np.ndarray, post: np.ndarray) -> np.ndarray:
    """EE/EI/IE/II code from (pre type, post type)."""
    pre_inh = ~is_exc[pre]
    post_inh = ~is_exc[post]
    return (2 * pre_inh.astype(np.int8) + post_inh.astype(np.int8))


def _truncated_normal(rng: np.random.Generator, mean: float, std: float, size: int) -> np.ndarray:
    """Normal(mean, std) resampled until strictly positive."""
    out = rng.normal(mean, std, size)
    bad = np.flatnonzero(out <= 0.0)
    while bad.size:
        out[bad] = rng.normal(mean, std, bad.size)
        bad = bad[out[bad] <= 0.0]
    return out


def build_liquid(config: LiquidConfig, seed: int) -> Liquid:
    """Sample a liquid from the class-wise connection statistics.

    Pure function of (config, seed): all randomness comes from one
    ``np.random.Generator`` consumed in a fixed order.
    """
    config.validate()
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    L = config.n_neurons
    L_e = config.n_excitatory

    is_exc = np.zeros(L, dtype=bool)
    is_exc[np.sort(rng.permutation(L)[:L_e])] = True

    grid = max(1, int(np.prod(config.column_dims)))
    idx = np.arange(L) % grid
    positions = np.column_stack(np.unravel_index(idx, config.column_dims)).astype(np.int64)

    # ordered-pair Bernoulli draw with the class probability, no self pairs
    pre_grid, post_grid = np.meshgrid(np.arange(L), np.arange(L), indexing="ij")
    pre_flat = pre_grid.ravel().astype(np.int32)
    post_flat = post_grid.ravel().astype(np.int32)
    cls_flat = _class_of(is_exc, pre_flat, post_flat)
    probs = np.array([config.conn_prob(c) for c in CLASS_NAMES])
    u = rng.random(L * L)
    keep = (u < probs[cls_flat]) & (pre_flat != post_flat)

    syn_pre = pre_flat[keep]
    syn_post = post_flat[keep]
    syn_class = cls_flat[keep]
    S = syn_pre.size

    syn_u_base = np.empty(S)
    syn_d_ms = np.empty(S)
    syn_f_ms = np.empty(S)
    syn_w = np.empty(S)
    gamma_shape = 1.0 / (config.w_cv ** 2)
    for code, name in enumerate(CLASS_NAMES):
        sel = np.flatnonzero(syn_class == code)
        if sel.size == 0:
            continue
        u_m, d_m, f_m = config.udf_means(name)
        frac = config.udf_std_fraction
        syn_u_base[sel] = np.minimum(
            _truncated_normal(rng, u_m, frac * u_m, sel.size), 1.0)
        syn_d_ms[sel] = _truncated_normal(rng, d_m, frac * d_m, sel.size)
        syn_f_ms[sel] = _truncated_normal(rng, f_m, frac * f_m, sel.size)
        w_mean = config.w_mean(name)
        mags = rng.gamma(gamma_shape, abs(w_mean) / gamma_shape, sel.size)
        syn_w[sel] = np.sign(w_mean) * mags

    pre_is_exc = is_exc[syn_pre]
    syn_delay_ms = np.where(syn_class == EE, config.delay_ee_ms, config.delay_other_ms)
    syn_tau_ms = np.where(pre_is_exc, config.tau_syn_exc_ms, config.tau_syn_inh_ms)

    # input lines: static excitatory synapses, never plastic
    n_lines = config.n_input_lines
    if n_lines > 0:
        line_grid, tgt_grid = np.meshgrid(np.arange(n_lines), np.arange(L), indexing="ij")
        keep_in = rng.random(n_lines * L) < config.input_conn_prob
        in_line = line_grid.ravel()[keep_in].astype(np.int32)
        in_post = tgt_grid.ravel()[keep_in].astype(np.int32)
    else:
        in_line = np.zeros(0, np.int32)
        in_post = np.zeros(0, np.int32)
    K = in_line.size
    in_w = np.full(K, float(config.input_weight))
    in_delay_ms = np.full(K, float(config.delay_other_ms))
    in_tau_ms = np.full(K, float(config.tau_syn_exc_ms))

    liq = Liquid(
        config=config, seed=int(seed), is_exc=is_exc, positions=positions,
        syn_pre=syn_pre.astype(np.int32), syn_post=syn_post.astype(np.int32),
        syn_class=syn_class.astype(np.int8), syn_w=syn_w,
        syn_delay_ms=syn_delay_ms.astype(np.float64), syn_tau_ms=syn_tau_ms.astype(np.float64),
        syn_u_base=syn_u_base, syn_d_ms=syn_d_ms, syn_f_ms=syn_f_ms,
        in_line=in_line, in_post=in_post, in_w=in_w,
        in_delay_ms=in_delay_ms, in_tau_ms=in_tau_ms,
    ).canonicalized()
    validate_liquid(liq)
    return liq


def validate_liquid(liquid: Liquid) -> None:
    """Check structural invariants; raise LiquidValidationError on violation."""
    L = liquid.n_neurons
    if liquid.syn_pre.size != liquid.syn_post.size:
        raise LiquidValidationError("synapse arrays have mismatched lengths")
    if liquid.n_synapses:
        if liquid.syn_pre.min() < 0 or liquid.syn_pre.max() >= L:
            raise LiquidValidationError("synapse pre id out of range")
        if liquid.syn_post.min() < 0 or liquid.syn_post.max() >= L:
            raise LiquidValidationError("synapse post id out of range")
    if np.any(liquid.syn_pre == liquid.syn_post):
        raise LiquidValidationError("self-connection present")
    pair_keys = liquid.syn_pre.astype(np.int64) * L + liquid.syn_post
    if np.unique(pair_keys).size != pair_keys.size:
        raise LiquidValidationError("duplicate (pre, post) synapse")
    expected_cls = _class_of(liquid.is_exc, liquid.syn_pre, liquid.syn_post)
    if not np.array_equal(expected_cls, liquid.syn_class):
        raise LiquidValidationError("synapse class inconsistent with neuron types")
    pre_exc = liquid.is_exc[liquid.syn_pre]
    if np.any(liquid.syn_w[pre_exc] <= 0.0) or np.any(liquid.syn_w[~pre_exc] >= 0.0):
        raise LiquidValidationError("weight sign inconsistent with pre-neuron type")
    if np.any(liquid.syn_u_base <= 0) or np.any(liquid.syn_u_base > 1):
        raise LiquidValidationError("U outside (0, 1]")
    if np.any(liquid.syn_d_ms <= 0) or np.any(liquid.syn_f_ms <= 0):
        raise LiquidValidationError("D/F must be > 0")
    if liquid.in_post.size and (liquid.in_post.min() < 0 or liquid.in_post.max() >= L):
        raise LiquidValidationError("input synapse target out of range")
    if liquid.in_line.size and liquid.in_line.min() < 0:
        raise LiquidValidationError("input line id negative")


def serialize_connection_table(liquid: Liquid) -> str:
    """Text table: '#' header (counts, seed, config, neuron metadata), then one
    line per synapse: ``pre post class w delta tau U D F``. Input-line synapses
    use class ``input`` with pre = line id and zero U/D/F."""
    liq = liquid.canonicalized()
    out = io.StringIO()
    out.write(f"# liquid L={liq.n_neurons} L_e={liq.n_excitatory} seed={liq.seed} "
              f"n_recurrent={liq.n_synapses} n_input={liq.in_line.size}\n")
    for line in config_to_text(liq.config).splitlines():
        out.write(f"# config {line}\n")
    for i in range(liq.n_neurons):
        kind = "exc" if liq.is_exc[i] else "inh"
        x, y, z = (int(v) for v in liq.positions[i])
        out.write(f"# neuron {i} {kind} {x} {y} {z}\n")

    def fmt(x: float) -> str:
        return format(float(x), _FLOAT_FMT)

    for k in range(liq.n_synapses):
        out.write(
            f"{liq.syn_pre[k]} {liq.syn_post[k]} {CLASS_NAMES[liq.syn_class[k]]} "
            f"{fmt(liq.syn_w[k])} {fmt(liq.syn_delay_ms[k])} {fmt(liq.syn_tau_ms[k])} "
            f"{fmt(liq.syn_u_base[k])} {fmt(liq.syn_d_ms[k])} {fmt(liq.syn_f_ms[k])}\n")
    for k in range(liq.in_line.size):
        out.write(
            f"{liq.in_line[k]} {liq.in_post[k]} input "
            f"{fmt(liq.in_w[k])} {fmt(liq.in_delay_ms[k])} {fmt(liq.in_tau_ms[k])} 0 0 0\n")
    return out.getvalue()


def parse_connection_table(text: str) -> Liquid:
    """Inverse of :func:`serialize_connection_table`; dynamic state is implicit
    (every run starts from u=U, R=1)."""
    header = {}
    config_lines = []
    neuron_rows = {}
    syn_rows = []
    in_rows = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            body = line[1:].strip()
            if body.startswith("liquid"):
                for token in body.split()[1:]:
                    key, _, val = token.partition("=")
                    header[key] = int(val)
            elif body.startswith("config "):
                config_lines.append(body[len("config "):])
            elif body.startswith("neuron "):
                parts = body.split()
                if len(parts) != 6:
                    raise TableParseError(f"line {lineno}: malformed neuron header")
                nid = int(parts[1])
                neuron_rows[nid] = (parts[2] == "exc", int(parts[3]), int(parts[4]), int(parts[5]))
            continue
        parts = line.split()
        if len(parts) != 9:
            raise TableParseError(
                f"line {lineno}: expected 9 fields 'pre post class w delta tau U D F', "
                f"got {len(parts)}")
        try:
            pre, post = int(parts[0]), int(parts[1])
            cls = parts[2]
            vals = [float(p) for p in parts[3:]]
        except ValueError as exc:
            raise TableParseError(f"line {lineno}: {exc}") from exc
        if cls == "input":
            in_rows.append((pre, post, *vals[:3]))
        elif cls in CLASS_CODES:
            syn_rows.append((pre, post, CLASS_CODES[cls], *vals))
        else:
            raise TableParseError(f"line {lineno}: unknown synapse class {cls!r}")

    if "L" not in header:
        raise TableParseError("missing '# liquid ...' header line")
    L = header["L"]
    try:
        config = parse_config_text("\n".join(config_lines)) if config_lines else LiquidConfig()
    except ConfigError as exc:
        raise TableParseError(f"bad embedded config: {exc}") from exc

    is_exc = np.zeros(L, dtype=bool)
    positions = np.zeros((L, 3), dtype=np.int64)
    for nid in range(L):
        if nid not in neuron_rows:
            raise TableParseError(f"missing '# neuron {nid} ...' header line")
        exc, x, y, z = neuron_rows[nid]
        is_exc[nid] = exc
        positions[nid] = (x, y, z)

    S = len(syn_rows)
    syn = np.array(syn_rows, dtype=np.float64).reshape(S, 9)
    K = len(in_rows)
    inp = np.array(in_rows, dtype=np.float64).reshape(K, 5)
    liq = Liquid(
        config=config, seed=header.get("seed", 0),
        is_exc=is_exc, positions=positions,
        syn_pre=syn[:, 0].astype(np.int32), syn_post=syn[:, 1].astype(np.int32),
        syn_class=syn[:, 2].astype(np.int8), syn_w=syn[:, 3].copy(),
        syn_delay_ms=syn[:, 4].copy(), syn_tau_ms=syn[:, 5].copy(),
        syn_u_base=syn[:, 6].copy(), syn_d_ms=syn[:, 7].copy(), syn_f_ms=syn[:, 8].copy(),
        in_line=inp[:, 0].astype(np.int32), in_post=inp[:, 1].astype(np.int32),
        in_w=inp[:, 2].copy(), in_delay_ms=inp[:, 3].copy(), in_tau_ms=inp[:, 4].copy(),
    )
    try:
        validate_liquid(liq)
    except LiquidValidationError as exc:
        raise TableParseError(str(exc)) from exc
    return liq
