"""
Few-shot method interfaces using Python Protocols (PEP 544).

Key Interfaces:
    - FewShotMethod: adapts a pre-trained extractor to one episode
    - EpisodeModel: the per-episode classifier a method returns
"""

from .few_shot_method import Adaptation, EpisodeModel, FewShotMethod

__all__ = ["Adaptation", "EpisodeModel", "FewShotMethod"]
