from kdda.data.models import (
    Batch,
    BatchPlan,
    DatasetError,
    DomainDataset,
    FeatureView,
    LabeledView,
)
from kdda.data.generators import gen_blobs, gen_two_moons, rotation_matrix
from kdda.data.csv_io import CsvSchema, load_csv, save_csv
from kdda.data.batching import batches, paired_batches, steps_per_epoch
