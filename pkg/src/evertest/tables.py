"""Published classifier confusion matrices used by the experiment recipes.

Row ``theta`` is the label pmf of the classifier under class ``theta``.
"""

from .stats import ConfusionMatrix

# 3-class, 10-d Gaussians, MLP classifier (null row 0, alternative theta=2)
GAUSSIAN_MLP = ConfusionMatrix([
    [0.483609, 0.243609, 0.272782],
    [0.186343, 0.559332, 0.254325],
    [0.200000, 0.244970, 0.555030],
])

# airplane / automobile / bird, VGG16 classifier
CIFAR_VGG = ConfusionMatrix([
    [0.867, 0.065, 0.068],
    [0.062, 0.903, 0.035],
    [0.14, 0.048, 0.812],
])

# same 2-class MLP evaluated on the training tuple and on the mean-shifted tuple
SHIFT_TRAIN = ConfusionMatrix([
    [0.948529, 0.051471],
    [0.012195, 0.987805],
])
SHIFT_TEST = ConfusionMatrix([
    [0.701987, 0.298013],
    [0.087248, 0.912752],
])

# pre-change row 0, post-change row 1
CHANGE_MLP = ConfusionMatrix([
    [0.933413, 0.066587],
    [0.063393, 0.936607],
])

# stronger (128-64) and weaker (64-32) MLP on the 3-class Gaussian tuple
MIXTURE_STRONG = ConfusionMatrix([
    [0.635678, 0.132508, 0.231814],
    [0.167847, 0.594985, 0.237168],
    [0.149833, 0.123749, 0.726418],
])
MIXTURE_WEAK = ConfusionMatrix([
    [0.482644, 0.230909, 0.286447],
    [0.198230, 0.515929, 0.285841],
    [0.200485, 0.233546, 0.565969],
])

# shifted-means experiment: training means and per-class shifts, identity covariance
SHIFT_MEANS = ([-1.5, -1.0], [1.5, 1.0])
SHIFT_DELTAS = ([1.0, 0.5], [-0.5, -0.5])

# 3-class 10-d Gaussian means, identity covariance
GAUSSIAN_MEANS_10D = (
    [0, 0, 0, 0, 0, 0.9, 0.8, 0.9, 0.8, 0.9],
    [0, 0, 0.1, 0.1, 0.1, 0.7, 0.8, 0.9, 0.9, 0.9],
    [0, 0, 0, 0, 0, 1, 1, 1, 1, 1],
)

BY_NAME = {
    "gaussian-mlp": GAUSSIAN_MLP,
    "cifar-vgg": CIFAR_VGG,
    "shift-train": SHIFT_TRAIN,
    "shift-test": SHIFT_TEST,
    "change-mlp": CHANGE_MLP,
    "mixture-strong": MIXTURE_STRONG,
    "mixture-weak": MIXTURE_WEAK,
}
