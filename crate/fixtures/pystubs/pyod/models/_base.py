import numpy as np

from _adstub import StubDetector


class BaseDeepDetector(StubDetector):
    LIBRARY = "pyod"

    def fit(self, X, y=None):
        X = self._fit_matrix(X)
        self.decision_scores_ = self._raw_scores(X)
        self._set_threshold(self.decision_scores_, float(self.contamination))
        self.labels_ = (self.decision_scores_ > self.threshold_).astype(int)
        return self

    def decision_function(self, X):
        return self._raw_scores(self._check_fitted(X))

    def predict(self, X):
        return (self.decision_function(X) > self.threshold_).astype(int)
