"""Population covariance construction and data simulation.

The predictor covariance has exponentially decaying eigenvalues, and only the
latent predictor components listed in ``relpos`` covary with the single
informative latent response component. Random orthonormal rotations then mix
latent components into observed variables: the predictor rotation is
block-diagonal over (relevant, irrelevant) positions, the response rotation is
one full block.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

STUDY_P = (20, 250)
STUDY_GAMMA = (0.2, 0.9)
STUDY_ETA = (0.0, 0.4, 0.8, 1.2)
STUDY_RELPOS = ((1, 2, 3, 4), (5, 6, 7, 8))


@dataclass(frozen=True)
class SimDesign:
    design_id: int
    p: int
    gamma: float
    eta: float
    relpos: tuple[int, ...]
    n: int = 100
    m: int = 4
    r2: float = 0.8
    base_seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "relpos", tuple(int(i) for i in self.relpos))
        if self.n < 1 or self.p < 1 or self.m < 1:
            raise ValueError("n, p and m must all be >= 1")
        if self.gamma < 0 or self.eta < 0:
            raise ValueError("gamma and eta must be non-negative")
        if not 0 <= self.r2 < 1:
            raise ValueError(f"r2 must lie in [0, 1), got {self.r2}")
        _check_relpos(self.relpos, self.p)

    @property
    def relpos_label(self) -> str:
        if _is_run(self.relpos):
            return f"{self.relpos[0]}:{self.relpos[-1]}"
        return ",".join(str(i) for i in self.relpos)

    def levels(self) -> dict:
        return {"p": self.p, "gamma": self.gamma, "eta": self.eta, "relpos": self.relpos_label}


def _is_run(idx):
    return len(idx) > 1 and all(b - a == 1 for a, b in zip(idx, idx[1:]))


def _check_relpos(relpos, p):
    if len(relpos) == 0:
        raise ValueError("relpos must be non-empty")
    if len(set(relpos)) != len(relpos):
        raise ValueError(f"relpos indices must be distinct: {relpos}")
    if min(relpos) < 1 or max(relpos) > p:
        raise ValueError(f"relpos indices must lie in 1..{p}: {relpos}")


@dataclass
class PopulationModel:
    design: SimDesign
    lam: np.ndarray
    kappa: np.ndarray
    sigma_zw: np.ndarray
    rot_x: np.ndarray
    rot_y: np.ndarray
    sigma_xx: np.ndarray
    sigma_xy: np.ndarray
    sigma_yy: np.ndarray
    beta_true: np.ndarray
    sigma2_y: np.ndarray
    sigma2_eps: np.ndarray
    _chol: np.ndarray | None = field(default=None, repr=False, compare=False)

    @property
    def p(self) -> int:
        return self.sigma_xx.shape[0]

    @property
    def m(self) -> int:
        return self.sigma_yy.shape[0]

    def joint_covariance(self) -> np.ndarray:
        """Covariance of the stacked vector (y, x), responses first."""
        return np.block([[self.sigma_yy, self.sigma_xy.T], [self.sigma_xy, self.sigma_xx]])

    def latent_r2(self) -> float:
        s = self.sigma_zw[:, 0]
        return float(np.sum(s**2 / self.lam) / self.kappa[0])

    def latent_covariance(self) -> np.ndarray:
        """Covariance of the latent vector (w, z); the observed joint
        covariance is this matrix rotated by blockdiag(rot_y, rot_x)."""
        return np.block([[np.diag(self.kappa), self.sigma_zw.T], [self.sigma_zw, np.diag(self.lam)]])

    def joint_eigenvalues(self) -> np.ndarray:
        """Eigenvalues of the joint covariance, ascending.

        Computed from the latent covariance, which is orthogonally similar
        and block-sparse: irrelevant predictor components contribute their
        eigenvalue directly. This stays accurate when the observed matrix is
        far too ill-conditioned for a dense eigensolver (p = 250).
        """
        rel = np.flatnonzero(np.any(self.sigma_zw != 0, axis=1))
        irr = np.setdiff1d(np.arange(self.p), rel)
        block = np.block(
            [
                [np.diag(self.kappa), self.sigma_zw[rel].T],
                [self.sigma_zw[rel], np.diag(self.lam[rel])],
            ]
        )
        return np.sort(np.concatenate([np.linalg.eigvalsh(block), self.lam[irr]]))

    def cholesky(self) -> np.ndarray:
        """Square-root factor F of the joint covariance (F F' = Sigma).

        F = blockdiag(rot_y, rot_x) L with L the lower-triangular Cholesky
        factor of the latent covariance.
        """
        if self._chol is None:
            try:
                low = np.linalg.cholesky(self.latent_covariance())
            except np.linalg.LinAlgError as exc:
                raise ValueError("joint covariance is not positive definite") from exc
            m = self.m
            self._chol = np.vstack([self.rot_y @ low[:m], self.rot_x @ low[m:]])
        return self._chol


@dataclass
class Dataset:
    x: np.ndarray
    y: np.ndarray
    design_id: int = 0
    method: str = ""
    replicate: int = 0
    seed: int | None = None

    def __post_init__(self):
        if self.x.shape[0] != self.y.shape[0]:
            raise ValueError("x and y must have the same number of rows")
        if not (np.all(np.isfinite(self.x)) and np.all(np.isfinite(self.y))):
            raise ValueError("dataset contains non-finite values")

    @property
    def n(self) -> int:
        return self.x.shape[0]


def predictor_eigenvalues(p: int, gamma: float) -> np.ndarray:
    if p < 1:
        raise ValueError("p must be >= 1")
    if gamma < 0:
        raise ValueError("gamma must be non-negative")
    return np.exp(-gamma * np.arange(p))


def response_eigenvalues(m: int, eta: float) -> np.ndarray:
    # The decay rate sits in the exponent; the returned values are the latent
    # response variances.
    if m < 1:
        raise ValueError("m must be >= 1")
    if eta < 0:
        raise ValueError("eta must be non-negative")
    return np.exp(-eta * np.arange(m))


def latent_cross_covariance(lam, kappa1, relpos, r2, rng) -> np.ndarray:
    """Covariances between latent predictor components and the informative
    latent response component.

    Magnitudes are drawn from U(0.1, 1) with random signs and then rescaled so
    that ``sum(sigma_i**2 / (lam_i * kappa1)) == r2``.
    """
    lam = np.asarray(lam, dtype=float)
    _check_relpos(tuple(relpos), lam.size)
    if not 0 <= r2 < 1:
        raise ValueError(f"r2 must lie in [0, 1), got {r2}")
    idx = np.asarray(relpos) - 1
    rho = rng.uniform(0.1, 1.0, size=idx.size) * rng.choice([-1.0, 1.0], size=idx.size)
    denom = np.sum(rho**2 / lam[idx])
    if denom <= 0:
        raise ValueError("degenerate latent covariance draw")
    out = np.zeros(lam.size)
    out[idx] = np.sqrt(r2 * kappa1 / denom) * rho
    return out


def random_orthonormal(k: int, rng) -> np.ndarray:
    q, r = np.linalg.qr(rng.standard_normal((k, k)))
    return q * np.where(np.diag(r) < 0, -1.0, 1.0)


def block_rotation_x(p: int, relpos, rng) -> np.ndarray:
    _check_relpos(tuple(relpos), p)
    rel = np.asarray(sorted(relpos)) - 1
    irr = np.setdiff1d(np.arange(p), rel)
    rot = np.zeros((p, p))
    rot[np.ix_(rel, rel)] = random_orthonormal(rel.size, rng)
    if irr.size:
        rot[np.ix_(irr, irr)] = random_orthonormal(irr.size, rng)
    return rot


def rotation_y(m: int, rng) -> np.ndarray:
    if m < 1:
        raise ValueError("m must be >= 1")
    return random_orthonormal(m, rng)


def assemble_population(design: SimDesign, rng) -> PopulationModel:
    lam = predictor_eigenvalues(design.p, design.gamma)
    kappa = response_eigenvalues(design.m, design.eta)
    sigma_zw = np.zeros((design.p, design.m))
    sigma_zw[:, 0] = latent_cross_covariance(lam, kappa[0], design.relpos, design.r2, rng)
    rot_x = block_rotation_x(design.p, design.relpos, rng)
    rot_y = rotation_y(design.m, rng)

    sigma_xx = (rot_x * lam) @ rot_x.T
    sigma_yy = (rot_y * kappa) @ rot_y.T
    sigma_xy = rot_x @ sigma_zw @ rot_y.T
    # exact symmetry
    sigma_xx = (sigma_xx + sigma_xx.T) / 2
    sigma_yy = (sigma_yy + sigma_yy.T) / 2
    beta_true = rot_x @ (sigma_zw / lam[:, None]) @ rot_y.T

    # Conditional covariance of y given x, computed in latent coordinates.
    cond_latent = np.diag(kappa) - sigma_zw.T @ (sigma_zw / lam[:, None])
    sigma_eps = rot_y @ cond_latent @ rot_y.T
    model = PopulationModel(
        design=design,
        lam=lam,
        kappa=kappa,
        sigma_zw=sigma_zw,
        rot_x=rot_x,
        rot_y=rot_y,
        sigma_xx=sigma_xx,
        sigma_xy=sigma_xy,
        sigma_yy=sigma_yy,
        beta_true=beta_true,
        sigma2_y=np.diag(sigma_yy).copy(),
        sigma2_eps=np.diag(sigma_eps).copy(),
    )
    if np.any(model.sigma2_eps <= 0):
        raise ValueError(f"non-positive error variance for design {design.design_id}")
    model.cholesky()
    return model


def sample_dataset(model: PopulationModel, n: int, rng, **tags) -> Dataset:
    """Draw ``n`` rows from the joint normal with zero means.

    Standard normal draws are mapped through the factor of
    :meth:`PopulationModel.cholesky`; the first ``m`` columns are responses.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    chol = model.cholesky()
    z = rng.standard_normal((n, model.m + model.p))
    data = z @ chol.T
    return Dataset(x=data[:, model.m :], y=data[:, : model.m], **tags)


def design_grid(base_seed: int = 0) -> list[SimDesign]:
    """The 32-cell full factorial, ids ordered with p varying fastest, then
    gamma, relpos and eta."""
    grid = []
    for k, (eta, relpos, gamma, p) in enumerate(
        itertools.product(STUDY_ETA, STUDY_RELPOS, STUDY_GAMMA, STUDY_P), start=1
    ):
        grid.append(SimDesign(k, p, gamma, eta, relpos, base_seed=base_seed))
    return grid


def find_designs(grid=None, **levels) -> list[SimDesign]:
    """Filter the grid by factor levels, e.g. ``find_designs(p=20, eta=0)``."""
    grid = design_grid() if grid is None else grid
    out = []
    for d in grid:
        ok = True
        for key, val in levels.items():
            have = getattr(d, key)
            if key == "relpos":
                ok &= tuple(have) == tuple(val)
            elif isinstance(val, float) or isinstance(have, float):
                ok &= bool(np.isclose(have, val))
            else:
                ok &= have == val
        if ok:
            out.append(d)
    return out
