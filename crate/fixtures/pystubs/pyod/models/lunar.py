from ._base import BaseDeepDetector


class LUNAR(BaseDeepDetector):
    MODEL = "LUNAR"
