"""Wavelet scattering color embeddings and a perceptual evaluation harness.

The package turns images into compact wavelet-scattering embeddings
computed per color channel in an approximately perceptually uniform color
space (JzAzBz), clusters them, and measures how coherently any embedding
algorithm (this one or an external producer's) groups images by color,
including agreement with human color-similarity judgments.
"""

from .analysis import (cosine_similarity, luminance_relation, pca_extremes,
                       proportion_test, rank_minmax, spearman,
                       t_test_two_tailed, two_sample_proportion_test)
from .clustering import ClusterModel, kmeans, random_relabel
from .colormetrics import (HullSummary, SimilarityStats, coherence_fraction,
                           coherence_null, color_histogram, color_similarity,
                           mean_color, null_distribution,
                           within_cluster_similarity)
from .colorspace import image_to_jzazbz, rgb_to_jzazbz, srgb_to_linear, to_grayscale
from .datagen import (BlockSpec, ImageRecord, StripeSpec, gen_blocks,
                      gen_stripes, load_cifar10, load_image_dir)
from .embedio import read_embeddings, write_embeddings
from .errors import DataError, DegenerateInputError
from .scattering import (Embedding, FilterBank, build_filter_bank, embed,
                         embed_dataset, scatter_channel, shuffle_pixels)

__version__ = "0.1.0"
