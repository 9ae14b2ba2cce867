from ._base import BaseDeepDetector


class VAE(BaseDeepDetector):
    MODEL = "VAE"
