from ._base import BaseDeepDetector


class ALAD(BaseDeepDetector):
    MODEL = "ALAD"
