from ._base import BaseDeepDetector


class AnoGAN(BaseDeepDetector):
    MODEL = "AnoGAN"
