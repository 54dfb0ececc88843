"""Multiclass large-margin classifiers and neural baselines for image-vector data.

Modules
-------
kernels     Mercer kernels and the Gaussian width heuristic
svm         binary SVMs trained with SMO
multiclass  one-vs-one / DDAG / one-vs-all banks with evaluation accounting
neural      one-hidden-layer perceptrons, Rprop, Nguyen-Widrow initialisation
metrics     confusion matrices, Cohen's kappa, kappa z test
imageprep   Otsu segmentation, crop/centre, 32x32 resize, vectorisation
harness     datasets, splits, grid search, sweeps, benchmarks
"""
from .kernels import KernelSpec, heuristic_sigma2, kernel_eval
from .metrics import build_confusion, cohen_kappa, kappa_variance, kappa_z_test
from .multiclass import decide_ddag, decide_voting, train_one_vs_all, train_one_vs_one
from .neural import init_nguyen_widrow, init_uniform, rprop_train
from .svm import SmoConfig, SmoConvergenceError, compact_linear, smo_train, svm_decide, svm_output

__version__ = "0.1.0"
