from mstat.client import Client

__version__ = "0.1.0"
