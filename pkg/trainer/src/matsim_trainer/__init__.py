"""Neural descriptor trainer for matsim datasets.

Consumes the generator's on-disk formats only: the set tree for training,
the descriptor exchange JSONL for export, and the batch fixture dump for
sampler verification.
"""

from .data import DatasetIndex, load_index, sample_batch
from .export import export_benchmark_descriptors, export_descriptors
from .loss import batch_loss, triplet_accuracy
from .model import EncoderConfig, SmallConvEncoder, build_encoder
from .train import heldout_accuracy, load_checkpoint, save_checkpoint, train

__version__ = "0.1.0"
