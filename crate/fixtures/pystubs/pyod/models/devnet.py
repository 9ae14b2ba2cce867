from ._base import BaseDeepDetector


class DevNet(BaseDeepDetector):
    MODEL = "DevNet"
