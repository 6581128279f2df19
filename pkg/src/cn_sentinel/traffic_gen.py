"""Deterministic synthetic 5G control-plane traffic with labeled attacks.

Benign traffic is built from procedure templates (registration, PDU
session establishment, NF discovery) whose instances arrive as Poisson
processes.  Four attack injectors cover the behaviours the three
detection stages target: replayed messages, tampered parameter values,
coordinated floods sharing payload values, and procedure sequence
violations.  Everything is a pure function of (config, seed): the same
config produces byte-identical JSONL on any machine (see rng module).
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field, fields
from typing import Union

from .core_types import (
    CORE_NF_KINDS,
    Attribute,
    ControlMessage,
    EntityRef,
    Label,
    LabelKind,
    NetworkFunctionKind,
    Protocol,
    serialize_message,
)
from .rng import SplitMix64

_K = NetworkFunctionKind
_HEX = "0123456789abcdef"
_DIGITS = "0123456789"


class GenerationError(ValueError):
    pass


@dataclass(frozen=True)
class Categorical:
    """Draw from a fixed pool of strings, optionally weighted."""

    pool: tuple[str, ...]
    weights: tuple[float, ...] | None = None

    def __post_init__(self):
        if not self.pool:
            raise GenerationError("categorical pool must be non-empty")
        if self.weights is not None:
            if len(self.weights) != len(self.pool) or any(w <= 0 for w in self.weights):
                raise GenerationError("categorical weights must be positive, one per item")

    def sample(self, rng: SplitMix64) -> str:
        if self.weights is None:
            return rng.choice(self.pool)
        return rng.weighted_choice(self.pool, self.weights)


@dataclass(frozen=True)
class NumericRange:
    """Numeric values, uniform over [low, high] or gaussian clipped to it."""

    low: float
    high: float
    dist: str = "uniform"
    mu: float | None = None
    sigma: float | None = None

    def __post_init__(self):
        if not self.low < self.high:
            raise GenerationError("NumericRange requires low < high")
        if self.dist not in ("uniform", "gaussian"):
            raise GenerationError(f"unknown distribution {self.dist!r}")
        if self.dist == "gaussian" and (self.mu is None or self.sigma is None or self.sigma <= 0):
            raise GenerationError("gaussian NumericRange requires mu and sigma > 0")

    def sample(self, rng: SplitMix64) -> float:
        if self.dist == "uniform":
            return rng.uniform(self.low, self.high)
        return min(self.high, max(self.low, rng.gauss(self.mu, self.sigma)))

    def mean(self) -> float:
        return (self.low + self.high) / 2.0 if self.dist == "uniform" else self.mu

    def std(self) -> float:
        return (self.high - self.low) / math.sqrt(12.0) if self.dist == "uniform" else self.sigma


@dataclass(frozen=True)
class IdPattern:
    """Identifier template: '#' becomes a random digit, '$' a hex digit."""

    template: str

    def __post_init__(self):
        if not self.template:
            raise GenerationError("empty id pattern")

    def sample(self, rng: SplitMix64) -> str:
        out = []
        for ch in self.template:
            if ch == "#":
                out.append(_DIGITS[rng.randint(10)])
            elif ch == "$":
                out.append(_HEX[rng.randint(16)])
            else:
                out.append(ch)
        return "".join(out)


ValueGenerator = Union[Categorical, NumericRange, IdPattern]


@dataclass(frozen=True)
class AttributeSchema:
    name: str
    gen: ValueGenerator


@dataclass(frozen=True)
class Step:
    """One message of a procedure. sender/recv None means the instance's
    wildcard core NF (bound once per instance, shared by all None slots)."""

    sender: NetworkFunctionKind | None
    recv: NetworkFunctionKind | None
    proto: Protocol
    attrs: tuple[AttributeSchema, ...]

    def sender_choices(self) -> tuple[NetworkFunctionKind, ...]:
        return CORE_NF_KINDS if self.sender is None else (self.sender,)

    def recv_choices(self) -> tuple[NetworkFunctionKind, ...]:
        return CORE_NF_KINDS if self.recv is None else (self.recv,)


@dataclass(frozen=True)
class ProcedureTemplate:
    name: str
    steps: tuple[Step, ...]
    gap_mu: float = 0.05
    gap_sigma: float = 0.02
    #: attribute names drawn once per instance and reused across steps
    shared_attrs: tuple[str, ...] = ()

    def __post_init__(self):
        if len(self.steps) < 1:
            raise GenerationError("template needs at least one step")


_NF_NAME_POOL = tuple(k.value for k in CORE_NF_KINDS)
_PORT = NumericRange(1024, 65535, "uniform")


def builtin_templates() -> tuple[ProcedureTemplate, ...]:
    """The three canonical control-plane procedures.

    Together they exercise all ten entity kinds and all four protocol
    tags; additional procedures can be modeled with the same types.
    """
    registration = ProcedureTemplate(
        name="registration",
        shared_attrs=("supi",),
        steps=(
            Step(_K.UE, _K.GNB, Protocol.NAS, (
                AttributeSchema("msgType", Categorical(("RegistrationRequest",))),
                AttributeSchema("supi", IdPattern("imsi-2089300####")),
                AttributeSchema("establishmentCause",
                                Categorical(("mo-Signalling", "mo-Data"), (0.7, 0.3))),
            )),
            Step(_K.GNB, _K.AMF, Protocol.NGAP, (
                AttributeSchema("msgType", Categorical(("InitialUEMessage",))),
                AttributeSchema("supi", IdPattern("imsi-2089300####")),
                AttributeSchema("ranIp", IdPattern("10.1.#.##")),
                AttributeSchema("ranUeId", NumericRange(1, 100000)),
            )),
            Step(_K.AMF, _K.AUSF, Protocol.SBI, (
                AttributeSchema("msgType", Categorical(("UEAuthenticationRequest",))),
                AttributeSchema("supi", IdPattern("imsi-2089300####")),
                AttributeSchema("servingNetwork",
                                Categorical(("5G:mnc093.mcc208", "5G:mnc001.mcc001"))),
                AttributeSchema("port", _PORT),
            )),
            Step(_K.AUSF, _K.UDM, Protocol.SBI, (
                AttributeSchema("msgType", Categorical(("AuthenticationVectorRequest",))),
                AttributeSchema("supi", IdPattern("imsi-2089300####")),
                AttributeSchema("authType", Categorical(("5G_AKA", "EAP_AKA_PRIME"), (0.8, 0.2))),
                AttributeSchema("port", _PORT),
            )),
            Step(_K.UDM, _K.UDR, Protocol.SBI, (
                AttributeSchema("msgType", Categorical(("SubscriptionDataQuery",))),
                AttributeSchema("supi", IdPattern("imsi-2089300####")),
                AttributeSchema("dataSet", Categorical(("AM", "SM", "AUTH"))),
                AttributeSchema("port", _PORT),
            )),
            Step(_K.AMF, _K.UE, Protocol.NAS, (
                AttributeSchema("msgType", Categorical(("RegistrationAccept",))),
                AttributeSchema("guti", IdPattern("5g-guti-####")),
                AttributeSchema("t3512", NumericRange(3000, 3600, "gaussian", mu=3240, sigma=60)),
            )),
        ),
    )

    pdu_session = ProcedureTemplate(
        name="pdu_session",
        shared_attrs=("supi", "pduSessionId", "dnn"),
        steps=(
            Step(_K.UE, _K.AMF, Protocol.NAS, (
                AttributeSchema("msgType", Categorical(("PDUSessionEstablishmentRequest",))),
                AttributeSchema("supi", IdPattern("imsi-2089300####")),
                AttributeSchema("pduSessionId", NumericRange(1, 255)),
                AttributeSchema("dnn", Categorical(("internet", "ims"), (0.85, 0.15))),
            )),
            Step(_K.AMF, _K.SMF, Protocol.SBI, (
                AttributeSchema("msgType", Categorical(("CreateSMContextRequest",))),
                AttributeSchema("supi", IdPattern("imsi-2089300####")),
                AttributeSchema("pduSessionId", NumericRange(1, 255)),
                AttributeSchema("dnn", Categorical(("internet", "ims"))),
                AttributeSchema("port", _PORT),
            )),
            Step(_K.SMF, _K.PCF, Protocol.SBI, (
                AttributeSchema("msgType", Categorical(("SMPolicyCreateRequest",))),
                AttributeSchema("supi", IdPattern("imsi-2089300####")),
                AttributeSchema("pduSessionId", NumericRange(1, 255)),
                AttributeSchema("port", _PORT),
            )),
            Step(_K.SMF, _K.UPF, Protocol.PFCP, (
                AttributeSchema("msgType", Categorical(("SessionEstablishmentRequest",))),
                AttributeSchema("seid", IdPattern("seid-$$$$")),
                AttributeSchema("ueIp", IdPattern("10.60.#.##")),
                AttributeSchema("teid", NumericRange(1024, 65535)),
            )),
            Step(_K.SMF, _K.AMF, Protocol.SBI, (
                AttributeSchema("msgType", Categorical(("CreateSMContextResponse",))),
                AttributeSchema("supi", IdPattern("imsi-2089300####")),
                AttributeSchema("pduSessionId", NumericRange(1, 255)),
                AttributeSchema("smContextRef", IdPattern("smctx-$$$$")),
                AttributeSchema("port", _PORT),
            )),
        ),
    )

    nf_discovery = ProcedureTemplate(
        name="nf_discovery",
        steps=(
            Step(None, _K.NRF, Protocol.SBI, (
                AttributeSchema("msgType", Categorical(("NFDiscoveryRequest",))),
                AttributeSchema("nfType", Categorical(_NF_NAME_POOL)),
                AttributeSchema("targetNfType", Categorical(_NF_NAME_POOL)),
                AttributeSchema("requesterIp", IdPattern("10.2.#.##")),
                AttributeSchema("port", _PORT),
            )),
            Step(_K.NRF, None, Protocol.SBI, (
                AttributeSchema("msgType", Categorical(("NFDiscoveryResponse",))),
                AttributeSchema("nfInstanceId", IdPattern("nfinst-$$$$")),
                AttributeSchema("validityPeriod",
                                NumericRange(1800, 5400, "gaussian", mu=3600, sigma=300)),
            )),
        ),
    )

    return (registration, pdu_session, nf_discovery)


def find_template(name: str) -> ProcedureTemplate:
    for t in builtin_templates():
        if t.name == name:
            return t
    raise GenerationError(f"unknown procedure template {name!r}")


def _schema_lookup(proc: str, attr_name: str) -> ValueGenerator | None:
    """Generator for an attribute, searching the named template first."""
    templates = builtin_templates()
    ordered = [t for t in templates if t.name == proc] + [t for t in templates if t.name != proc]
    for t in ordered:
        for step in t.steps:
            for schema in step.attrs:
                if schema.name == attr_name:
                    return schema.gen
    return None


def all_categorical_pools() -> frozenset[str]:
    values = set()
    for t in builtin_templates():
        for step in t.steps:
            for schema in step.attrs:
                if isinstance(schema.gen, Categorical):
                    values.update(schema.gen.pool)
    return frozenset(values)


_DEFAULT_ENTITIES = {
    "AMF": 1, "AUSF": 1, "NRF": 1, "SMF": 1, "UDM": 1, "PCF": 1, "UDR": 1, "UPF": 1,
    "GNB": 2, "UE": 8,
}


@dataclass
class ScenarioConfig:
    """Everything the generator needs; a pure function of this + seed."""

    duration: float = 60.0
    entities: dict = field(default_factory=lambda: dict(_DEFAULT_ENTITIES))
    rates: dict = field(default_factory=dict)     # template name -> Poisson lambda (events/s)
    counts: dict = field(default_factory=dict)    # template name -> exact instance count
    attacks: dict = field(default_factory=dict)   # label kind -> target message count
    replay_count: int = 20        # copies per replay burst
    replay_window: float = 8.0    # replay spread (s)
    tamper_sigma: float = 10.0    # numeric tamper at mean + k*std
    ddos_senders: int = 50        # senders per flood
    ddos_window: float = 2.0      # flood spread (s)
    seq_template: str = "pdu_session"
    seed: int = 0

    def __post_init__(self):
        if self.duration <= 0:
            raise GenerationError("duration must be > 0")
        for kind, n in self.entities.items():
            NetworkFunctionKind.parse(kind)
            if not isinstance(n, int) or n < 0:
                raise GenerationError(f"entity count for {kind} must be a non-negative integer")
        known = {t.name for t in builtin_templates()}
        for name, lam in self.rates.items():
            if name not in known:
                raise GenerationError(f"rate for unknown template {name!r}")
            if lam < 0:
                raise GenerationError("rates must be >= 0")
        for name, n in self.counts.items():
            if name not in known:
                raise GenerationError(f"count for unknown template {name!r}")
            if not isinstance(n, int) or n < 0:
                raise GenerationError("counts must be non-negative integers")
        for kind, n in self.attacks.items():
            k = LabelKind(kind)
            if k is LabelKind.BENIGN:
                raise GenerationError("attack mix cannot include 'benign'")
            if not isinstance(n, int) or n < 0:
                raise GenerationError("attack counts must be non-negative integers")
        if self.replay_count < 1 or self.ddos_senders < 2:
            raise GenerationError("replay_count >= 1 and ddos_senders >= 2 required")
        if self.replay_window <= 0 or self.ddos_window <= 0:
            raise GenerationError("attack windows must be > 0")
        if self.seq_template not in known:
            raise GenerationError(f"unknown seq_template {self.seq_template!r}")
        if not isinstance(self.seed, int) or self.seed < 0:
            raise GenerationError("seed must be a non-negative integer")

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    @classmethod
    def from_dict(cls, data: dict) -> "ScenarioConfig":
        names = {f.name for f in fields(cls)}
        unknown = set(data) - names
        if unknown:
            raise GenerationError(f"unknown scenario config keys: {sorted(unknown)}")
        return cls(**data)


def _entity_pools(cfg: ScenarioConfig) -> dict[NetworkFunctionKind, list[EntityRef]]:
    pools: dict[NetworkFunctionKind, list[EntityRef]] = {}
    for kind in NetworkFunctionKind:
        n = cfg.entities.get(kind.value, 0)
        pools[kind] = [EntityRef(f"{kind.value.lower()}-{i + 1}", kind) for i in range(n)]
    return pools


def _bind_entity(kind, pools, binding, rng):
    if kind in binding:
        return binding[kind]
    pool = pools.get(kind, [])
    if not pool:
        raise GenerationError(f"empty entity pool for kind {kind.value}")
    ent = rng.choice(pool)
    binding[kind] = ent
    return ent


def _instantiate(
    template: ProcedureTemplate,
    t0: float,
    pools: dict,
    rng: SplitMix64,
    label_kind: LabelKind = LabelKind.BENIGN,
    steps: tuple[Step, ...] | None = None,
) -> list[ControlMessage]:
    """One procedure instance; entities and shared values bound per instance."""
    steps = template.steps if steps is None else steps
    wildcard_kind = None
    if any(s.sender is None or s.recv is None for s in steps):
        wildcard_kind = rng.choice(CORE_NF_KINDS)
    binding: dict = {}
    shared: dict[str, object] = {}
    label = Label(label_kind, template.name)

    t = t0
    out = []
    for i, step in enumerate(steps):
        if i > 0:
            t += max(0.0, rng.gauss(template.gap_mu, template.gap_sigma))
        sender = _bind_entity(step.sender if step.sender is not None else wildcard_kind,
                              pools, binding, rng)
        recv = _bind_entity(step.recv if step.recv is not None else wildcard_kind,
                            pools, binding, rng)
        attrs = []
        for schema in step.attrs:
            if schema.name in template.shared_attrs:
                if schema.name not in shared:
                    shared[schema.name] = schema.gen.sample(rng)
                value = shared[schema.name]
            else:
                value = schema.gen.sample(rng)
            attrs.append(Attribute(schema.name, value))
        out.append(ControlMessage(0, t, recv, sender, step.proto, tuple(attrs), label))
    return out


def _fresh_ids(stream: list[ControlMessage], count: int) -> list[int]:
    base = max((m.msg_id for m in stream), default=-1) + 1
    return list(range(base, base + count))


def inject_replay(
    stream: list[ControlMessage], source: ControlMessage, r: int, dt: float, seed: int
) -> list[ControlMessage]:
    """Append r byte-identical copies of source within (source.ts, source.ts+dt]."""
    if r < 1:
        raise GenerationError("replay count must be >= 1")
    if not any(m is source or m.msg_id == source.msg_id for m in stream):
        raise GenerationError("replay source not found in stream")
    rng = SplitMix64(seed)
    ids = _fresh_ids(stream, r)
    label = Label(LabelKind.REPLAY_DOS, source.label.proc if source.label else "")
    copies = []
    for i in range(r):
        # strictly after the source: (0, dt]
        offset = dt * (1.0 - rng.random())
        copies.append(ControlMessage(
            ids[i], source.ts + offset, source.recv, source.send, source.proto,
            source.attrs, label,
        ))
    return stream + copies


def _tamper_text(rng: SplitMix64) -> str:
    pools = all_categorical_pools()
    letters = "abcdefghijklmnopqrstuvwxyz"
    while True:
        token = "".join(letters[rng.randint(26)] for _ in range(12))
        if token not in pools:
            return token


def inject_tamper(
    stream: list[ControlMessage], source: ControlMessage, seed: int, magnitude: float = 10.0
) -> list[ControlMessage]:
    """Append a clone of source with exactly one attribute made aberrant.

    Numeric values move to mean + magnitude*std of the attribute's
    benign distribution; text values become a random token outside
    every categorical pool.
    """
    if not source.attrs:
        raise GenerationError("tamper source has no attributes")
    rng = SplitMix64(seed)
    idx = rng.randint(len(source.attrs))
    attr = source.attrs[idx]
    proc = source.label.proc if source.label else ""
    if attr.is_numeric:
        gen = _schema_lookup(proc, attr.name)
        if isinstance(gen, NumericRange):
            value = gen.mean() + magnitude * gen.std()
        else:
            # no schema knowledge: push far beyond the observed value
            value = attr.value * magnitude + 1000.0
    else:
        value = _tamper_text(rng)
    attrs = list(source.attrs)
    attrs[idx] = Attribute(attr.name, value)
    clone = ControlMessage(
        _fresh_ids(stream, 1)[0], source.ts, source.recv, source.send, source.proto,
        tuple(attrs), Label(LabelKind.PARAM_TAMPER, proc),
    )
    return stream + [clone]


def inject_ddos(
    stream: list[ControlMessage], target: EntityRef, m: int, dt: float, seed: int
) -> list[ControlMessage]:
    """Append m messages from m freshly minted senders, all sharing one
    targetNfType and one IP value, within a dt-wide burst."""
    if m < 2:
        raise GenerationError("ddos sender count must be >= 2")
    rng = SplitMix64(seed)
    ts_values = [msg.ts for msg in stream]
    lo = min(ts_values, default=0.0)
    hi = max(ts_values, default=dt)
    t0 = rng.uniform(lo, max(lo, hi - dt))
    shared_target = rng.choice(_NF_NAME_POOL)
    shared_ip = IdPattern("10.9.#.##").sample(rng)
    tag = f"{seed & 0xFFFF:04x}"
    ids = _fresh_ids(stream, m)
    label = Label(LabelKind.DDOS_COORD, "nf_discovery")
    burst = []
    for i in range(m):
        sender = EntityRef(f"rogue-{tag}-{i + 1}", rng.choice(CORE_NF_KINDS))
        attrs = (
            Attribute("msgType", "NFDiscoveryRequest"),
            Attribute("targetNfType", shared_target),
            Attribute("requesterIp", shared_ip),
        )
        burst.append(ControlMessage(
            ids[i], t0 + rng.random() * dt, target, sender, Protocol.SBI, attrs, label,
        ))
    return stream + burst


def violation_steps(template: ProcedureTemplate, rng: SplitMix64) -> tuple[Step, ...]:
    """Drop one step and swap an adjacent pair of the remainder.

    For registration the dropped step is the authentication request
    (the attack hides the credential check); otherwise the initiating
    step is dropped, modeling an injected mid-procedure continuation.
    """
    if len(template.steps) < 3:
        raise GenerationError("sequence violation needs a template with >= 3 steps")
    if template.name == "registration":
        drop = next(
            i for i, s in enumerate(template.steps)
            if s.sender is _K.AMF and s.recv is _K.AUSF
        )
    else:
        drop = 0
    remaining = [s for i, s in enumerate(template.steps) if i != drop]
    j = rng.randint(len(remaining) - 1)
    remaining[j], remaining[j + 1] = remaining[j + 1], remaining[j]
    return tuple(remaining)


def inject_seq_violation(
    stream: list[ControlMessage], template: ProcedureTemplate, seed: int
) -> list[ControlMessage]:
    """Append one out-of-order, incomplete instance of the template."""
    rng = SplitMix64(seed)
    steps = violation_steps(template, rng)
    pools: dict[NetworkFunctionKind, list[EntityRef]] = {}
    seen = set()
    for msg in stream:
        for ent in (msg.recv, msg.send):
            if ent.key not in seen:
                seen.add(ent.key)
                pools.setdefault(ent.kind, []).append(ent)
    for kind in NetworkFunctionKind:
        pools.setdefault(kind, [EntityRef(f"{kind.value.lower()}-1", kind)])
    hi = max((msg.ts for msg in stream), default=0.0)
    t0 = rng.uniform(0.0, hi)
    msgs = _instantiate(template, t0, pools, rng, LabelKind.SEQ_VIOLATION, steps=steps)
    ids = _fresh_ids(stream, len(msgs))
    for i, msg in enumerate(msgs):
        msg.msg_id = ids[i]
    return stream + msgs


def generate_scenario(cfg: ScenarioConfig) -> list[ControlMessage]:
    """Full labeled scenario: benign Poisson traffic plus the attack mix.

    Output is ts-sorted with msg_id dense from 0.
    """
    root = SplitMix64(cfg.seed)
    benign_rng = root.fork()
    attack_rng = root.fork()
    pools = _entity_pools(cfg)

    stream: list[ControlMessage] = []
    for template in builtin_templates():
        t_rng = benign_rng.fork()
        arrivals: list[float] = []
        lam = cfg.rates.get(template.name, 0.0)
        if lam > 0:
            t = 0.0
            while True:
                u = t_rng.random()
                t += -math.log(1.0 - u) / lam
                if t >= cfg.duration:
                    break
                arrivals.append(t)
        n_fixed = cfg.counts.get(template.name, 0)
        if n_fixed:
            # Poisson process conditioned on its count: iid uniform arrivals
            arrivals.extend(sorted(t_rng.uniform(0.0, cfg.duration) for _ in range(n_fixed)))
        for t0 in arrivals:
            stream.extend(_instantiate(template, t0, pools, t_rng))

    benign = list(stream)
    for kind_value in (
        LabelKind.REPLAY_DOS, LabelKind.PARAM_TAMPER, LabelKind.DDOS_COORD,
        LabelKind.SEQ_VIOLATION,
    ):
        target_count = cfg.attacks.get(kind_value.value, 0)
        if target_count <= 0:
            continue
        k_rng = attack_rng.fork()
        produced = 0
        while produced < target_count:
            if kind_value is LabelKind.REPLAY_DOS:
                if not benign:
                    raise GenerationError("replay attack requires benign traffic")
                source = k_rng.choice(benign)
                r = min(cfg.replay_count, target_count - produced)
                stream = inject_replay(stream, source, r, cfg.replay_window, k_rng.next_u64())
                produced += r
            elif kind_value is LabelKind.PARAM_TAMPER:
                candidates = [m for m in benign if m.attrs]
                if not candidates:
                    raise GenerationError("tamper attack requires benign traffic with attributes")
                source = k_rng.choice(candidates)
                stream = inject_tamper(stream, source, k_rng.next_u64(), cfg.tamper_sigma)
                produced += 1
            elif kind_value is LabelKind.DDOS_COORD:
                nrf_pool = pools.get(NetworkFunctionKind.NRF, [])
                if nrf_pool:
                    target = nrf_pool[0]
                else:
                    core = [e for k in CORE_NF_KINDS for e in pools.get(k, [])]
                    if not core:
                        raise GenerationError("ddos attack requires a core NF entity")
                    target = k_rng.choice(core)
                stream = inject_ddos(
                    stream, target, cfg.ddos_senders, cfg.ddos_window, k_rng.next_u64()
                )
                produced += cfg.ddos_senders
            else:
                template = find_template(cfg.seq_template)
                before = len(stream)
                stream = inject_seq_violation(stream, template, k_rng.next_u64())
                produced += len(stream) - before

    stream.sort(key=lambda m: m.ts)
    for i, msg in enumerate(stream):
        msg.msg_id = i
    return stream


def dataset_digest(messages: list[ControlMessage]) -> str:
    """SHA-256 over the serialized JSONL bytes (determinism pin)."""
    h = hashlib.sha256()
    for msg in messages:
        h.update(serialize_message(msg).encode("utf-8"))
        h.update(b"\n")
    return h.hexdigest()
