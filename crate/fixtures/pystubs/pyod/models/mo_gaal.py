from ._base import BaseDeepDetector


class MO_GAAL(BaseDeepDetector):
    MODEL = "MO-GAAL"
