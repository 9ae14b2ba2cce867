"""Lightweight stand-ins for detector libraries, driven by the simulator catalog.

Constructors validate keyword arguments against the catalog the same way the
real libraries fail: unknown or missing arguments raise TypeError. Scores are
a standardized distance from the training data plus seeded noise that shrinks
with the training-epoch parameter, so tuning has something to improve.
"""

import json
import os

import numpy as np

_CATALOG = None
_EPOCH_KEYS = ("epoch_num", "epochs", "n_epochs", "stop_epochs", "epoch", "train_epochs")


def catalog():
    global _CATALOG
    if _CATALOG is None:
        path = os.environ.get("AD_AGENT_STUB_CATALOG") or os.path.join(
            os.path.dirname(os.path.abspath(__file__)), "..", "..", "..", "crates", "core", "simulated", "catalog.json"
        )
        with open(path) as fh:
            _CATALOG = json.load(fh)
    return _CATALOG


def specs(library, model):
    lib = catalog()["libraries"][library]
    return lib["common_params"] + lib["models"][model]["params"]


def as_array(value):
    if value is None:
        return None
    if hasattr(value, "detach"):
        value = value.detach().cpu().numpy()
    return np.asarray(value, dtype=float)


class StubDetector:
    LIBRARY = None
    MODEL = None

    def __init__(self, **kwargs):
        cls = type(self).__name__
        params = specs(self.LIBRARY, self.MODEL)
        names = [p["name"] for p in params]
        for key in kwargs:
            if key not in names:
                raise TypeError("%s.__init__() got an unexpected keyword argument '%s'" % (cls, key))
        missing = [p["name"] for p in params if "default" not in p and p["name"] not in kwargs]
        if missing:
            quoted = " and ".join("'%s'" % m for m in missing)
            plural = "s" if len(missing) > 1 else ""
            raise TypeError("%s.__init__() missing %d required positional argument%s: %s" % (cls, len(missing), plural, quoted))
        self.params = {p["name"]: p.get("default") for p in params}
        self.params.update(kwargs)
        contamination = self.params.get("contamination")
        if contamination is not None and not 0.0 < float(contamination) <= 0.5:
            raise ValueError("contamination must be in (0, 0.5], got: %f" % float(contamination))
        for key, value in self.params.items():
            setattr(self, key, value)
        self._fitted = None

    def _noise_scale(self):
        for key in _EPOCH_KEYS:
            value = self.params.get(key)
            if isinstance(value, (int, float)) and not isinstance(value, bool):
                return 2.0 / np.sqrt(1.0 + max(float(value), 0.0))
        return 0.5

    def _seed(self):
        seed = self.params.get("random_state")
        return 0 if seed is None else int(seed)

    def _fit_matrix(self, X):
        X = np.asarray(X, dtype=float)
        if X.ndim != 2 or X.shape[0] == 0:
            raise ValueError("expected a non-empty 2D array, got shape %s" % (X.shape,))
        mean = X.mean(axis=0)
        std = X.std(axis=0)
        std[std == 0] = 1.0
        self._fitted = (mean, std)
        return X

    def _check_fitted(self, X):
        if self._fitted is None:
            raise RuntimeError("%s is not fitted yet; call fit first" % type(self).__name__)
        X = np.asarray(X, dtype=float)
        width = self._fitted[0].shape[0]
        if X.ndim != 2 or X.shape[1] != width:
            raise ValueError("input shape %s does not match the fitted dimension %d" % (X.shape, width))
        return X

    def _raw_scores(self, X):
        mean, std = self._fitted
        z = (X - mean) / std
        distance = np.sqrt((z ** 2).mean(axis=1))
        rng = np.random.default_rng(self._seed() + X.shape[0])
        return distance + rng.normal(0.0, self._noise_scale(), size=X.shape[0])

    def _set_threshold(self, train_scores, rate):
        self.threshold_ = float(np.quantile(train_scores, 1.0 - rate))
