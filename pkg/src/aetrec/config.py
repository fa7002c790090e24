"""Flat dotted-key experiment configuration.

Format: one `key = value` pair per line, `#` comments, blank lines ignored.
Unknown keys are hard errors so typos cannot silently fall back to
defaults.  The raw text is carried along so output directories can echo the
exact configuration that produced them.
"""

from dataclasses import dataclass, field

from . import fem, lm, phantom


class ConfigError(Exception):
    pass


# key -> (type, default).  hanke_q / discrepancy use 0.0 as "disabled".
SCHEMA = {
    "mesh.n_rings": (int, 24),
    "mesh.sim_n_rings": (int, 0),
    "phantom.background": (float, 1.0),
    "phantom.bumps": (str, "0.35,0.2,0.3,9.0;-0.25,-0.3,0.25,5.0"),
    "phantom.lo": (float, 1.0),
    "phantom.hi": (float, 10.0),
    "bcs": (str, "linear:1,0 linear:0,1 paper-f3"),
    "noise.std": (float, 0.0),
    "noise.seed": (int, 0),
    "lm.alpha0": (float, 1.0),
    "lm.decay": (float, 0.5),
    "lm.alpha_min": (float, 1e-8),
    "lm.beta": (float, 1e-3),
    "lm.adjoint": (str, "h1"),
    "lm.max_iters": (int, 15),
    "lm.sigma_min": (float, 1e-12),
    "lm.sigma0": (float, 1.0),
    "lm.hanke_q": (float, 0.0),
    "lm.discrepancy": (float, 0.0),
    "output.emit": (str, "csv"),
}

EMIT_CHOICES = ("csv", "vtk", "png")


@dataclass(frozen=True)
class ExperimentConfig:
    values: dict
    raw_text: str = ""
    overrides: dict = field(default_factory=dict)

    def __getitem__(self, key):
        return self.values[key]

    def n_rings(self):
        return self.values["mesh.n_rings"]

    def sim_n_rings(self):
        v = self.values["mesh.sim_n_rings"]
        return v if v > 0 else 2 * self.n_rings()

    def phantom_spec(self):
        return phantom.PhantomSpec(
            background=self.values["phantom.background"],
            bumps=parse_bumps(self.values["phantom.bumps"]),
            lo=self.values["phantom.lo"],
            hi=self.values["phantom.hi"])

    def bcs(self):
        return parse_bcs(self.values["bcs"])

    def lm_config(self):
        v = self.values
        try:
            return lm.LmConfig(
                alpha0=v["lm.alpha0"], decay=v["lm.decay"],
                alpha_min=v["lm.alpha_min"], beta=v["lm.beta"],
                adjoint=v["lm.adjoint"], max_iters=v["lm.max_iters"],
                sigma_min=v["lm.sigma_min"], sigma0=v["lm.sigma0"],
                hanke_q=v["lm.hanke_q"], discrepancy=v["lm.discrepancy"])
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    def emit(self):
        flags = tuple(t for t in self.values["output.emit"].split(",") if t)
        for t in flags:
            if t not in EMIT_CHOICES:
                raise ConfigError(f"unknown emit flag {t!r}, "
                                  f"choose from {EMIT_CHOICES}")
        return flags


def parse_bumps(text):
    """Bump list 'cx,cy,width,amplitude;...'; empty string means none."""
    text = text.strip()
    if not text:
        return ()
    bumps = []
    for part in text.split(";"):
        fields = part.split(",")
        if len(fields) != 4:
            raise ConfigError(f"bump {part!r} needs cx,cy,width,amplitude")
        try:
            cx, cy, w, a = (float(f) for f in fields)
        except ValueError as exc:
            raise ConfigError(f"bad bump {part!r}: {exc}") from exc
        try:
            bumps.append(phantom.GaussianBump(center=(cx, cy), width=w,
                                              amplitude=a))
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
    return tuple(bumps)


def parse_bcs(text):
    """Boundary-condition tokens: 'linear:a,b' or 'paper-f3', whitespace
    separated."""
    tokens = text.split()
    if not tokens:
        raise ConfigError("at least one boundary condition required")
    bcs = []
    for tok in tokens:
        if tok == "paper-f3":
            bcs.append(fem.bc_diagonal())
        elif tok.startswith("linear:"):
            fields = tok[len("linear:"):].split(",")
            if len(fields) != 2:
                raise ConfigError(f"bad token {tok!r}: linear needs a,b")
            try:
                a, b = float(fields[0]), float(fields[1])
            except ValueError as exc:
                raise ConfigError(f"bad token {tok!r}: {exc}") from exc
            bcs.append(fem.bc_linear(a, b))
        else:
            raise ConfigError(f"unknown boundary-condition token {tok!r}")
    return bcs


def parse_config(text):
    values = {k: d for k, (_, d) in SCHEMA.items()}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ConfigError(f"line {lineno}: expected key = value, "
                              f"got {stripped!r}")
        key, _, raw = stripped.partition("=")
        key = key.strip()
        raw = raw.strip()
        if key not in SCHEMA:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        typ = SCHEMA[key][0]
        try:
            if typ is int:
                values[key] = int(raw)
            elif typ is float:
                values[key] = float(raw)
            else:
                values[key] = raw
        except ValueError as exc:
            raise ConfigError(f"line {lineno}: bad value for {key}: "
                              f"{exc}") from exc
    cfg = ExperimentConfig(values=values, raw_text=text)
    validate(cfg)
    return cfg


def load_config(path):
    try:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config(text)


def validate(cfg):
    """Fail fast on every derived object before any compute happens."""
    if cfg.n_rings() < 1:
        raise ConfigError("mesh.n_rings must be >= 1")
    sim = cfg.values["mesh.sim_n_rings"]
    if sim and sim % cfg.n_rings() != 0:
        raise ConfigError("mesh.sim_n_rings must be a multiple of "
                          "mesh.n_rings for exact transfer")
    if cfg.values["noise.std"] < 0:
        raise ConfigError("noise.std must be nonnegative")
    try:
        cfg.phantom_spec()
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    cfg.bcs()
    cfg.lm_config()
    cfg.emit()


def apply_overrides(cfg, seed=None, adjoint=None):
    """Command-line overrides; recorded so manifests can report them."""
    values = dict(cfg.values)
    overrides = dict(cfg.overrides)
    if seed is not None:
        values["noise.seed"] = int(seed)
        overrides["noise.seed"] = int(seed)
    if adjoint is not None:
        if adjoint not in ("l2", "h1", "h2"):
            raise ConfigError(f"unknown adjoint {adjoint!r}")
        values["lm.adjoint"] = adjoint
        overrides["lm.adjoint"] = adjoint
    out = ExperimentConfig(values=values, raw_text=cfg.raw_text,
                           overrides=overrides)
    validate(out)
    return out


def default_config_text():
    lines = [f"{k} = {d}" for k, (_, d) in SCHEMA.items()]
    return "\n".join(lines) + "\n"
