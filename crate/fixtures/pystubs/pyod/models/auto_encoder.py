from ._base import BaseDeepDetector


class AutoEncoder(BaseDeepDetector):
    MODEL = "AE"
