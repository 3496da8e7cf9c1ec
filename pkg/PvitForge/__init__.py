from PvitForge.core.app import Pvit

from .logging import LOGGER

app = Pvit()
