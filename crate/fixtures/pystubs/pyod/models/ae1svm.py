from ._base import BaseDeepDetector


class AE1SVM(BaseDeepDetector):
    MODEL = "AE1SVM"
