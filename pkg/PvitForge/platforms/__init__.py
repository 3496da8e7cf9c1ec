from .Augment import AugmentAPI
from .Chat import ChatAPI
from .Detector import DetectAPI
from .Fixture import FixtureAPI
from .Similarity import SimilarityAPI

# Remote client class per capability.
REMOTE = {
    "detect": DetectAPI,
    "face": DetectAPI,
    "augment": AugmentAPI,
    "caption": ChatAPI,
    "complete": ChatAPI,
    "similarity": SimilarityAPI,
    "model_under_test": ChatAPI,
}
