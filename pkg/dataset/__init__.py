from dataset.base import Dataset
from dataset.cifar import load_cifar, load_cifar_dir
from dataset.noise import NoiseSpec, inject_symmetric_noise, labels_hash, load_external_labels
from dataset.sources import DataSpec, NoiseConfig, PreparedData, build_source, prepare_data
from dataset.split import split, stratified_subset
from dataset.synthetic import make_synthetic
