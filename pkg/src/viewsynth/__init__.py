"""Continuous novel-view synthesis from a single image.

Pipeline: encode the source view into a latent 3D point set, rigidly
transform it, decode a target-view depth map, convert depth to backward
correspondences by perspective projection, and bilinearly warp source
pixels into the target view. Trainable end-to-end from image pairs; a
procedural raycaster provides analytic ground truth, and a FastAPI service
streams synthesized frames to interactive clients.
"""

__version__ = "0.1.0"
