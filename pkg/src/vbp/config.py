"""Flat ``key = value`` run configuration files."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from pathlib import Path

from .data import bundled
from .network import NetworkSpec, SpecError


class ConfigError(ValueError):
    pass


KEYS = {
    "name", "topology", "activations", "eta", "seed", "sampling", "stride", "init",
    "epochs", "data", "inputs", "targets", "split", "split_order", "scaler", "ddof",
}


@dataclass
class RunConfig:
    name: str
    spec: NetworkSpec
    epochs: int = 1
    data: Path | None = None
    inputs: list[str] = field(default_factory=list)
    targets: list[str] = field(default_factory=list)
    split: int | None = None
    split_order: str = "file"
    scaler: str = "zscore"
    ddof: int = 0
    source: str | None = None

    def with_seed(self, seed: int) -> "RunConfig":
        return replace(self, spec=replace(self.spec, seed=int(seed)))

    def as_dict(self) -> dict:
        s = self.spec
        return {
            "name": self.name,
            "topology": "-".join(map(str, s.topology)),
            "activations": ",".join(s.activations),
            "eta": ",".join(repr(e) for e in s.eta),
            "seed": s.seed,
            "sampling": s.sampling,
            "stride": s.stride,
            "init": s.random_init,
            "epochs": self.epochs,
            "data": str(self.data) if self.data else None,
            "inputs": ",".join(self.inputs),
            "targets": ",".join(self.targets),
            "split": self.split,
            "split_order": self.split_order,
            "scaler": self.scaler,
            "ddof": self.ddof,
        }


# which config key a spec error message points at
_ERROR_KEYS = [
    ("activation", "activations"), ("learning rate", "eta"), ("sampling", "sampling"),
    ("init", "init"), ("stride", "stride"), ("float", "eta"), ("int()", "seed"),
]


def _list(value: str) -> list[str]:
    return [v.strip() for v in value.split(",") if v.strip()]


def resolve_config_path(name: str) -> Path:
    """A config path, or the name of a bundled config (``xor-and``, ``mpg``)."""
    p = Path(name)
    if p.exists():
        return p
    shipped = bundled(name.replace("-", "_") + ".cfg")
    if shipped.exists():
        return shipped
    raise ConfigError(f"config {name!r} not found")


def parse_config(text: str, source: str = "<config>", base: Path | None = None) -> RunConfig:
    values: dict[str, tuple[str, int]] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        key = key.lower()
        if key not in KEYS:
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
        values[key] = (value, lineno)

    def get(key, default=None):
        return values[key][0] if key in values else default

    def fail(key, exc):
        line = values[key][1] if key in values else 0
        raise ConfigError(f"{source}:{line}: {exc}") from None

    if "topology" not in values:
        raise ConfigError(f"{source}: missing 'topology'")
    try:
        spec = NetworkSpec(
            topology=get("topology"),
            activations=get("activations", "tanh"),
            eta=[float(e) for e in _list(get("eta", "0.1"))],
            seed=int(get("seed", "0")),
            sampling=get("sampling", "sequential"),
            random_init=get("init", "uniform01"),
            stride=int(get("stride")) if get("stride") else None,
        )
    except (SpecError, ValueError) as e:
        msg = str(e)
        key = next((k for word, k in _ERROR_KEYS if word in msg), "topology")
        fail(key, e)
    data = None
    if get("data"):
        p = Path(get("data"))
        if not p.is_absolute() and base is not None and (base / p).exists():
            p = base / p
        elif not p.exists() and bundled(p.name).exists():
            p = bundled(p.name)
        data = p
    try:
        epochs = int(get("epochs", "1"))
        split = int(get("split")) if get("split") else None
        ddof = int(get("ddof", "0"))
    except ValueError as e:
        fail("epochs", e)
    if epochs < 0:
        fail("epochs", "epochs must be >= 0")
    return RunConfig(
        name=get("name", Path(source).stem if source else "run"),
        spec=spec, epochs=epochs, data=data,
        inputs=_list(get("inputs", "")), targets=_list(get("targets", "")),
        split=split, split_order=get("split_order", "file"),
        scaler=get("scaler", "zscore"), ddof=ddof, source=source,
    )


def load_config(path) -> RunConfig:
    p = resolve_config_path(str(path))
    return parse_config(p.read_text(encoding="utf-8"), str(p), p.parent)
