"""Seed-space text GAN: seed generator, discriminators, interpreter, metrics."""

__version__ = "0.1.0"
