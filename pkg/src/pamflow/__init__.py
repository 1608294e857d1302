"""pamflow: batch processing of passive acoustic monitoring recordings.

Stages: inventory -> spectrogram tiles -> multi-label scoring ->
thresholded detections -> station-day summaries and review material.
"""

__version__ = "0.1.0"

from .classify import DetectionClass, ScoreRow, load_class_list, predict_batch, reference_score
from .detect import Detection, apply_thresholds, combine_parts, summarize
from .inventory import FileRecord, Inventory, parse_filename, read_inventory, scan, write_inventory
from .media_io import AudioMetadata, SampleBuffer, decode, read_metadata, resample
from .pipeline import RunConfig, RunReport, run
from .spectro import Clip, SpectroConfig, Tile, segment, stft_power, to_tile
