"""sindeblur package: single-image multi-scale GAN training and blind motion deblurring."""

__version__ = "0.1.0"
