import numpy as np

from _adstub import StubDetector


class _SeriesModel(StubDetector):
    LIBRARY = "tslib"

    def _check_channels(self, values):
        values = np.asarray(values, dtype=float)
        if values.ndim != 2 or values.shape[1] != int(self.enc_in):
            raise RuntimeError(
                "size mismatch: enc_in=%d but the series has shape %s" % (int(self.enc_in), values.shape)
            )
        return values

    def fit(self, train):
        train = self._check_channels(train)
        self._fit_matrix(train)
        self._train_scores = self._raw_scores(train)
        return self

    def decision_function(self, test):
        return self._raw_scores(self._check_fitted(self._check_channels(test)))

    def predict(self, test):
        scores = self.decision_function(test)
        combined = np.concatenate([self._train_scores, scores])
        self._set_threshold(combined, float(self.anomaly_ratio) / 100.0)
        return (scores > self.threshold_).astype(int)


class Pyraformer(_SeriesModel):
    MODEL = "Pyraformer"

    def fit(self, train):
        product = int(np.prod(self.window_size))
        if int(self.seq_len) % product != 0:
            raise RuntimeError(
                "size mismatch: seq_len=%d is not divisible by the pyramid window product %d"
                % (int(self.seq_len), product)
            )
        return super().fit(train)


def _model(name):
    return type(name, (_SeriesModel,), {"MODEL": name})


Autoformer = _model("Autoformer")
DLinear = _model("DLinear")
ETSformer = _model("ETSformer")
FEDformer = _model("FEDformer")
Informer = _model("Informer")
LightTS = _model("LightTS")
Reformer = _model("Reformer")
TimesNet = _model("TimesNet")
Transformer = _model("Transformer")
