from ._base import BaseDeepDetector


class SO_GAAL(BaseDeepDetector):
    MODEL = "SO-GAAL"
