from ._base import BaseDeepDetector


class DeepSVDD(BaseDeepDetector):
    MODEL = "DeepSVDD"

    def fit(self, X, y=None):
        width = getattr(X, "shape", (0, 0))[1]
        if int(self.n_features) != width:
            raise ValueError("n_features=%d does not match the input dimension %d" % (int(self.n_features), width))
        return super().fit(X, y)
