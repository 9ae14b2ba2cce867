import numpy as np

from _adstub import StubDetector, as_array


def _node_features(data):
    x = as_array(data.x)
    edges = as_array(data.edge_index).astype(int)
    degree = np.zeros(len(x))
    if edges.size:
        np.add.at(degree, edges.reshape(2, -1)[0], 1.0)
        np.add.at(degree, edges.reshape(2, -1)[1], 1.0)
    return np.column_stack([x, degree])


class _GraphDetector(StubDetector):
    LIBRARY = "pygod"

    def fit(self, data, label=None):
        X = self._fit_matrix(_node_features(data))
        self.decision_score_ = self._raw_scores(X)
        self._set_threshold(self.decision_score_, float(self.contamination))
        self.label_ = (self.decision_score_ > self.threshold_).astype(int)
        return self

    def decision_function(self, data, label=None):
        return self._raw_scores(self._check_fitted(_node_features(data)))

    def predict(self, data, label=None):
        return (self.decision_function(data) > self.threshold_).astype(int)


class GAAN(_GraphDetector):
    MODEL = "GAAN"

    def fit(self, data, label=None):
        y = getattr(data, "y", None)
        if y is not None:
            y = as_array(y).ravel()
            if not np.all(np.isin(y, (0.0, 1.0))):
                raise ValueError("GAAN expects binary targets in data.y, got continuous values")
        return super().fit(data, label)


def _detector(name):
    return type(name, (_GraphDetector,), {"MODEL": name})


AdONE = _detector("AdONE")
ANOMALOUS = _detector("ANOMALOUS")
AnomalyDAE = _detector("AnomalyDAE")
CONAD = _detector("CONAD")
DONE = _detector("DONE")
GUIDE = _detector("GUIDE")
Radar = _detector("Radar")
SCAN = _detector("SCAN")
