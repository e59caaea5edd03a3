"""Group key exchange lab: mBD+P / mBD+S, the colluding-insider attack, and key confirmation."""

__version__ = "0.1.0"
