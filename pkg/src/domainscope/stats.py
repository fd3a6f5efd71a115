import csv
import io
import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy import stats as sps

from .errors import DegenerateColumn, InsufficientData, SingularMatrix, UsageError

INDICATOR_COLUMNS = ("Pco", "Alexa", "OSE", "Aut", "InD", "OutD", "Clo", "Bet", "Cco", "Eve")

MIN_OBSERVATIONS = 3
# Below this many pairs the p-value comes from the full permutation distribution.
EXACT_PERMUTATION_LIMIT = 10
VARIMAX_TOL = 1e-10
SPEARMAN_POLICY = "pairwise-complete"
PCA_POLICY = "listwise-complete"


@dataclass(frozen=True, eq=False)
class IndicatorMatrix:
    rows: tuple
    columns: tuple
    values: np.ndarray

    def __post_init__(self):
        rows = tuple(self.rows)
        columns = tuple(self.columns)
        values = np.asarray(self.values, dtype=float).reshape(len(rows), len(columns))
        if len(set(columns)) != len(columns):
            raise UsageError(f"duplicate indicator columns: {columns}")
        object.__setattr__(self, "rows", rows)
        object.__setattr__(self, "columns", columns)
        object.__setattr__(self, "values", values)

    @classmethod
    def from_records(cls, records, columns=INDICATOR_COLUMNS):
        records = list(records)
        values = np.full((len(records), len(columns)), np.nan)
        for i, (_, data) in enumerate(records):
            for j, column in enumerate(columns):
                value = data.get(column)
                if value is not None:
                    values[i, j] = float(value)
        return cls(tuple(row for row, _ in records), tuple(columns), values)

    def column(self, name):
        return self.values[:, self.columns.index(name)]

    def complete_rows(self):
        return int((~np.isnan(self.values).any(axis=1)).sum())

    def to_csv(self):
        buffer = io.StringIO()
        writer = csv.writer(buffer, lineterminator="\n")
        writer.writerow(("row",) + self.columns)
        for row, values in zip(self.rows, self.values):
            writer.writerow((row,) + tuple("" if math.isnan(v) else repr(float(v)) for v in values))
        return buffer.getvalue()

    @classmethod
    def from_csv(cls, text):
        reader = csv.reader(io.StringIO(text))
        header = next(reader)
        rows = []
        values = []
        for record in reader:
            rows.append(record[0])
            values.append([float(v) if v != "" else np.nan for v in record[1:]])
        return cls(tuple(rows), tuple(header[1:]), np.array(values, dtype=float).reshape(len(rows), len(header) - 1))


@dataclass(frozen=True, eq=False)
class CorrelationResult:
    columns: tuple
    coefficients: np.ndarray
    p_values: np.ndarray
    significant: np.ndarray
    n: np.ndarray
    alpha: float
    degenerate: tuple = ()
    missing_policy: str = SPEARMAN_POLICY

    def coefficient(self, a, b):
        return float(self.coefficients[self.columns.index(a), self.columns.index(b)])

    def is_significant(self, a, b):
        return bool(self.significant[self.columns.index(a), self.columns.index(b)])


@dataclass(frozen=True, eq=False)
class PcaResult:
    columns: tuple
    eigenvalues: np.ndarray
    explained: np.ndarray
    loadings: np.ndarray
    rotated: np.ndarray
    rotation: np.ndarray
    correlation: np.ndarray
    n_rows: int
    missing_policy: str = PCA_POLICY


def _ranks(values, name):
    if np.ptp(values) == 0:
        raise DegenerateColumn(f"column {name} is constant; correlation undefined")
    return sps.rankdata(values, method="average")


def _rank_correlation(rx, ry):
    cx = rx - rx.mean()
    cy = ry - ry.mean()
    rho = float(cx @ cy / math.sqrt(float(cx @ cx) * float(cy @ cy)))
    return min(1.0, max(-1.0, rho))


def _exact_p_value(rx, ry):
    cy = ry - ry.mean()
    scale_y = float(cy @ cy)

    def statistic(x, axis=-1):
        cx = x - x.mean(axis=axis, keepdims=True)
        return (cx * cy).sum(axis=axis) / np.sqrt((cx * cx).sum(axis=axis) * scale_y)

    result = sps.permutation_test(
        (rx,),
        statistic,
        permutation_type="pairings",
        vectorized=True,
        n_resamples=np.inf,
        alternative="two-sided",
    )
    return float(result.pvalue)


def _t_p_value(rho, n):
    if abs(rho) >= 1.0:
        return 0.0
    t = rho * math.sqrt((n - 2) / (1.0 - rho * rho))
    return float(2.0 * sps.t.sf(abs(t), n - 2))


def spearman_pair(x, y, names=("x", "y")):
    """Return (rho, p_value, n) over the pairwise-complete observations."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    mask = ~(np.isnan(x) | np.isnan(y))
    n = int(mask.sum())
    if n < MIN_OBSERVATIONS:
        raise InsufficientData(f"{names[0]}/{names[1]}: {n} complete pairs, need {MIN_OBSERVATIONS}")
    rx = _ranks(x[mask], names[0])
    ry = _ranks(y[mask], names[1])
    rho = _rank_correlation(rx, ry)
    if n < EXACT_PERMUTATION_LIMIT:
        p_value = _exact_p_value(rx, ry)
    else:
        p_value = _t_p_value(rho, n)
    return rho, p_value, n


def spearman(matrix, alpha=0.01):
    columns = matrix.columns
    p = len(columns)
    coefficients = np.full((p, p), np.nan)
    p_values = np.full((p, p), np.nan)
    significant = np.zeros((p, p), dtype=bool)
    counts = np.zeros((p, p), dtype=int)
    degenerate = set()

    values = matrix.values
    for i in range(p):
        present = ~np.isnan(values[:, i])
        counts[i, i] = int(present.sum())
        coefficients[i, i] = 1.0
    for i in range(p):
        for j in range(i + 1, p):
            try:
                rho, p_value, n = spearman_pair(values[:, i], values[:, j], (columns[i], columns[j]))
            except InsufficientData:
                mask = ~(np.isnan(values[:, i]) | np.isnan(values[:, j]))
                counts[i, j] = counts[j, i] = int(mask.sum())
                continue
            except DegenerateColumn as exc:
                for k in (i, j):
                    column = values[:, k]
                    kept = column[~np.isnan(column)]
                    if kept.size and np.ptp(kept) == 0:
                        degenerate.add(columns[k])
                logging.debug("%s", exc)
                continue
            counts[i, j] = counts[j, i] = n
            coefficients[i, j] = coefficients[j, i] = rho
            p_values[i, j] = p_values[j, i] = p_value
            significant[i, j] = significant[j, i] = p_value < alpha
    if degenerate:
        logging.warning("Constant indicator columns, correlations missing: %s", ", ".join(sorted(degenerate)))
    return CorrelationResult(
        columns=columns,
        coefficients=coefficients,
        p_values=p_values,
        significant=significant,
        n=counts,
        alpha=alpha,
        degenerate=tuple(sorted(degenerate)),
    )


def _orient(matrix, companion=None):
    matrix = matrix.copy()
    companion = None if companion is None else companion.copy()
    for j in range(matrix.shape[1]):
        column = matrix[:, j]
        if column[int(np.argmax(np.abs(column)))] < 0:
            matrix[:, j] = -column
            if companion is not None:
                companion[:, j] = -companion[:, j]
    return matrix, companion


def varimax_criterion(loadings):
    squared = np.asarray(loadings, dtype=float) ** 2
    p = squared.shape[0]
    return float(((squared**2).sum(axis=0) - squared.sum(axis=0) ** 2 / p).sum())


def varimax(loadings, tol=VARIMAX_TOL, max_sweeps=500, kaiser=False):
    original = np.array(loadings, dtype=float)
    p, k = original.shape
    rotation = np.eye(k)
    if k < 2:
        return original.copy(), rotation
    weights = np.ones(p)
    if kaiser:
        weights = np.sqrt((original**2).sum(axis=1))
        weights[weights == 0] = 1.0
    current = original / weights[:, None]

    criterion = varimax_criterion(current)
    for _ in range(max_sweeps):
        for i in range(k - 1):
            for j in range(i + 1, k):
                x = current[:, i]
                y = current[:, j]
                u = x * x - y * y
                v = 2.0 * x * y
                a, b = u.sum(), v.sum()
                c = (u * u - v * v).sum()
                d = 2.0 * (u * v).sum()
                phi = 0.25 * math.atan2(d - 2.0 * a * b / p, c - (a * a - b * b) / p)
                if abs(phi) < 1e-15:
                    continue
                cos, sin = math.cos(phi), math.sin(phi)
                new_i = cos * x + sin * y
                new_j = -sin * x + cos * y
                current[:, i] = new_i
                current[:, j] = new_j
                r_i = rotation[:, i].copy()
                r_j = rotation[:, j].copy()
                rotation[:, i] = cos * r_i + sin * r_j
                rotation[:, j] = -sin * r_i + cos * r_j
        updated = varimax_criterion(current)
        gain = updated - criterion
        criterion = updated
        if gain < tol:
            break
    return original @ rotation, rotation


def pca_varimax(matrix, k=2, kaiser=False):
    p = len(matrix.columns)
    if not 1 <= k <= p:
        raise UsageError(f"component count {k} outside 1..{p}")
    complete = ~np.isnan(matrix.values).any(axis=1)
    data = matrix.values[complete]
    n = data.shape[0]
    if n < MIN_OBSERVATIONS:
        raise InsufficientData(f"PCA needs {MIN_OBSERVATIONS} complete rows, have {n}")
    spread = data.std(axis=0, ddof=1)
    constant = [name for name, s in zip(matrix.columns, spread) if s == 0]
    if constant:
        raise SingularMatrix(f"correlation matrix undefined, constant columns: {', '.join(constant)}")

    z = (data - data.mean(axis=0)) / spread
    correlation = z.T @ z / (n - 1)
    correlation = (correlation + correlation.T) / 2.0
    np.fill_diagonal(correlation, 1.0)

    eigenvalues, vectors = np.linalg.eigh(correlation)
    order = np.argsort(-eigenvalues, kind="stable")
    eigenvalues = np.clip(eigenvalues[order], 0.0, None)
    vectors = vectors[:, order]
    loadings, _ = _orient(vectors * np.sqrt(eigenvalues))

    retained = loadings[:, :k]
    rotated, rotation = varimax(retained, kaiser=kaiser)
    rotated, rotation = _orient(rotated, rotation)
    logging.info("PCA on %d complete rows, %d components", n, k)
    return PcaResult(
        columns=matrix.columns,
        eigenvalues=eigenvalues,
        explained=eigenvalues[:k] / p,
        loadings=retained,
        rotated=rotated,
        rotation=rotation,
        correlation=correlation,
        n_rows=n,
    )
