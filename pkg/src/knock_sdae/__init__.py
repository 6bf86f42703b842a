"""Acoustic object recognition with stacked denoising autoencoders.

Knock recordings are peak-aligned into fixed-length windows and classified
by a stacked denoising autoencoder, with MFCC+SVM and raw+SVM baselines.
"""

__version__ = "0.1.0"
