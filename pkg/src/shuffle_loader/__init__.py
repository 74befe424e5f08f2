from .config import BenchSettings as BenchSettings
from .config import LoaderSettings as LoaderSettings
from .dataset_format import DatasetHandle as DatasetHandle
from .dataset_format import convert_stream_to_indexable as convert_stream_to_indexable
from .dataset_format import get_chunk as get_chunk
from .dataset_format import get_sample as get_sample
from .dataset_format import iterate_stream as iterate_stream
from .dataset_format import open_indexable as open_indexable
from .dataset_format import write_indexable_dataset as write_indexable_dataset
from .dataset_format import write_stream_dataset as write_stream_dataset
from .fetch_engine import AssembledBatch as AssembledBatch
from .fetch_engine import FetchConfig as FetchConfig
from .fetch_engine import epoch_loader as epoch_loader
from .fetch_engine import generate_batch_ordered as generate_batch_ordered
from .fetch_engine import generate_batch_unordered as generate_batch_unordered
from .settings import Settings as Settings
from .shuffle_sampler import ShuffleMode as ShuffleMode
from .shuffle_sampler import ShuffleSpec as ShuffleSpec
from .shuffle_sampler import make_epoch_plan as make_epoch_plan
from .shuffle_sampler import make_permutation as make_permutation
from .trainer_sim import ModelState as ModelState
from .trainer_sim import train_epochs as train_epochs

__version__ = "0.1.0"
