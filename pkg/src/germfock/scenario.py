"""Scenario files: parsing, validation, round-trip and object builders.

A scenario is a JSON tree.  Complex scalars are ``[re, im]`` pairs and
complex arrays are ``{"re": nested, "im": nested}``.
"""
import copy
import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from . import hamiltonian as ham
from .fock import TruncationSpec
from .geometry import IsotropicManifold, harmonic_frame, point_frame
from .verification import bdg_modes, rotating_frame, stationary_point

__all__ = ["ConfigError", "Scenario", "load_scenario", "shipped_scenarios", "SCHEMA_VERSION"]

SCHEMA_VERSION = "germfock.scenario/1"

MANIFOLDS = ("point", "circle", "stationary_orbit")
GERMS = ("point", "harmonic", "rotating")
FAMILIES = ("harmonic", "quartic_pair", "number_conserving", "random_polynomial", "inline")

DEFAULT_TOLERANCES = {
    "axiom": 1e-8,
    "quantization": 1e-8,
    "residual_floor": 1e-6,
    "min_slope": 0.4,
    "norm_ratio": 2.0,
    "sector_deviation": 1e-6,
    "energy_slope_low": 0.8,
    "energy_slope_high": 1.2,
}


class ConfigError(ValueError):
    """Malformed scenario; the message names the offending location."""


def _complex_array(value, where):
    try:
        if isinstance(value, dict):
            return np.asarray(value["re"], dtype=float) + 1j * np.asarray(value["im"], dtype=float)
        arr = np.asarray(value, dtype=float)
        if arr.ndim >= 1 and arr.shape[-1] == 2:
            return arr[..., 0] + 1j * arr[..., 1]
        raise ConfigError(f"{where}: expected [re, im] pairs or a {{re, im}} object")
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"{where}: cannot read complex array ({exc})") from None


def _require(tree, key, where):
    if not isinstance(tree, dict) or key not in tree:
        raise ConfigError(f"{where}: missing key '{key}'")
    return tree[key]


@dataclass
class Scenario:
    """Validated scenario tree with builders for the numerical objects."""

    data: dict
    source: str = "<memory>"
    tolerances: dict = field(default_factory=dict)

    def __post_init__(self):
        self.data = copy.deepcopy(self.data)
        self._validate()
        tol = dict(DEFAULT_TOLERANCES)
        tol.update(self.data.get("tolerances", {}))
        tol.update(self.tolerances)
        self.tolerances = tol

    # ---------------------------------------------------------- parsing

    @classmethod
    def from_text(cls, text, source="<memory>"):
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{source}:{exc.lineno}:{exc.colno}: {exc.msg}") from None
        return cls(data, source)

    def to_dict(self):
        return copy.deepcopy(self.data)

    def to_text(self):
        return json.dumps(self.data, indent=2, sort_keys=True) + "\n"

    def _validate(self):
        d = self.data
        if not isinstance(d, dict):
            raise ConfigError(f"{self.source}: top level must be an object")
        if d.get("schema", SCHEMA_VERSION) != SCHEMA_VERSION:
            raise ConfigError(f"{self.source}: unsupported schema {d.get('schema')!r}")
        _require(d, "name", self.source)
        tr = _require(d, "truncation", self.source)
        D = _require(tr, "D", "truncation")
        if not isinstance(D, int) or D < 1:
            raise ConfigError("truncation.D: must be a positive integer")
        nmax = _require(tr, "N_max", "truncation")
        if not (isinstance(nmax, int) and nmax >= 0) and nmax != "auto":
            raise ConfigError("truncation.N_max: must be a non-negative integer or 'auto'")
        h = _require(d, "hamiltonian", self.source)
        fam = _require(h, "family", "hamiltonian")
        if fam not in FAMILIES:
            raise ConfigError(f"hamiltonian.family: unknown family {fam!r}; known: {', '.join(FAMILIES)}")
        man = _require(d, "manifold", self.source)
        if _require(man, "family", "manifold") not in MANIFOLDS:
            raise ConfigError(f"manifold.family: unknown family {man['family']!r}")
        germ = _require(d, "germ", self.source)
        if _require(germ, "family", "germ") not in GERMS:
            raise ConfigError(f"germ.family: unknown family {germ['family']!r}")
        eps = _require(d, "eps", self.source)
        if not isinstance(eps, list) or not eps:
            raise ConfigError("eps: must be a non-empty list")
        vals = [float(e) for e in eps]
        if min(vals) <= 0 or len(set(vals)) != len(vals):
            raise ConfigError("eps: values must be positive and distinct")
        for key in d.get("tolerances", {}):
            if key not in DEFAULT_TOLERANCES:
                raise ConfigError(f"tolerances.{key}: unknown tolerance")
        for key in ("phi_tilde", "phi", "direction"):
            if key in man:
                _complex_array(man[key], f"manifold.{key}")
        if "Z" in germ:
            _complex_array(germ["Z"], "germ.Z")

    # --------------------------------------------------------- builders

    @property
    def name(self):
        return self.data["name"]

    @property
    def D(self):
        return int(self.data["truncation"]["D"])

    @property
    def eps_list(self):
        return [float(e) for e in self.data["eps"]]

    @property
    def time(self):
        t = self.data.get("time", {})
        return float(t.get("t", 0.5)), int(t.get("steps", 400)), int(t.get("samples", 11))

    @property
    def seed(self):
        return int(self.data.get("seed", 0))

    @property
    def nu(self):
        nu = self.data.get("nu")
        return None if nu is None else tuple(int(v) for v in nu)

    def hamiltonian(self):
        h = self.data["hamiltonian"]
        fam = h["family"]
        p = h.get("params", {})
        try:
            if fam == "harmonic":
                return ham.harmonic(p["omega"])
            if fam == "quartic_pair":
                return ham.quartic_pair(self.D, p["T"], p["V"], p.get("J", 0.0))
            if fam == "number_conserving":
                return ham.number_conserving(self.D, p.get("seed", self.seed), p.get("scale", 0.3))
            if fam == "random_polynomial":
                return ham.random_polynomial(self.D, p.get("seed", self.seed), p.get("degree", 4),
                                             p.get("scale", 0.2))
            terms = {}
            for i, t in enumerate(_require(h, "terms", "hamiltonian")):
                terms[(int(t["m"]), int(t["n"]))] = _complex_array(t["tensor"], f"hamiltonian.terms[{i}]")
            if h.get("complete_adjoint", False):
                return ham.HamiltonianCoeffs.from_hermitian_part(self.D, terms)
            return ham.HamiltonianCoeffs(self.D, terms)
        except KeyError as exc:
            raise ConfigError(f"hamiltonian.params: missing {exc}") from None

    def grid_points(self, grid_scale=1):
        return int(self.data["manifold"].get("n_points", 64)) * int(grid_scale)

    def _stationary(self, eps):
        """``(phi, Omega, F, G, beta)`` of the stationary orbit at ``eps``."""
        man = self.data["manifold"]
        H = self.hamiltonian()
        u = _complex_array(man["direction"], "manifold.direction")
        density = float(man["density"])
        n = density
        conv = self.data["germ"].get("convention", "trivial")
        nu = self.nu or (0,) * (self.D - 1)
        for _ in range(200):
            phi, Omega = stationary_point(H, u, n)
            F, G, beta = bdg_modes(H, phi, Omega)
            if conv != "monodromy":
                break
            new = density + eps * float(np.dot(beta[1:], nu)) / Omega
            if abs(new - n) < 1e-15 * max(1.0, n):
                break
            n = new
        return phi, Omega, F, G, beta

    def manifold(self, eps=None, grid_scale=1):
        man = self.data["manifold"]
        fam = man["family"]
        if fam == "point":
            return IsotropicManifold.point(_complex_array(man["phi"], "manifold.phi"))
        if fam == "circle":
            pt = _complex_array(man["phi_tilde"], "manifold.phi_tilde")
            return IsotropicManifold.circle(pt, self.grid_points(grid_scale))
        eps = self.eps_list[0] if eps is None else eps
        phi = self._stationary(eps)[0]
        return IsotropicManifold.circle(phi, self.grid_points(grid_scale))

    def frame(self, m, eps=None):
        germ = self.data["germ"]
        fam = germ["family"]
        nT = m.D - m.k
        Z = _complex_array(germ["Z"], "germ.Z").reshape(nT, nT) if "Z" in germ else None
        if fam == "point":
            return point_frame(np.zeros((m.D, m.D), complex) if Z is None else Z)
        if fam == "harmonic":
            return harmonic_frame(m, Z)
        eps = self.eps_list[0] if eps is None else eps
        _, Omega, F, G, beta = self._stationary(eps)
        return rotating_frame(m, F, G, beta, Omega, germ.get("convention", "trivial"))

    def truncation(self, eps, m=None):
        tr = self.data["truncation"]
        if tr["N_max"] != "auto":
            return TruncationSpec(self.D, int(tr["N_max"]))
        m = m or self.manifold(eps)
        n = float(np.max(np.sum(np.abs(m.phi) ** 2, axis=-1))) / eps
        extra = sum(self.nu or ())
        return TruncationSpec(self.D, int(np.ceil(n)) + extra + int(tr.get("margin", 4)))


def shipped_scenarios():
    """Names of the scenarios bundled with the package."""
    root = resources.files("germfock") / "scenarios"
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".json"))


def load_scenario(path_or_name, tolerances=None) -> Scenario:
    """Read a scenario file, or a bundled scenario by name."""
    p = Path(path_or_name)
    if p.exists():
        text, src = p.read_text(), str(p)
    else:
        res = resources.files("germfock") / "scenarios" / f"{path_or_name}.json"
        if not res.is_file():
            raise ConfigError(f"{path_or_name}: no such file or shipped scenario")
        text, src = res.read_text(), f"shipped:{path_or_name}"
    sc = Scenario.from_text(text, src)
    if tolerances:
        unknown = set(tolerances) - set(DEFAULT_TOLERANCES)
        if unknown:
            raise ConfigError(f"--tol-overrides: unknown tolerance(s) {sorted(unknown)}")
        sc.tolerances.update(tolerances)
    return sc
