"""
Gaussian label distributions and the KL loss
============================================

Each true age becomes a small bump of probability over its neighbours.
The network is trained to match the bump rather than a one-hot target.
"""

import numpy as np

from asutrain import AgeClassSet, gaussian_label_distribution, kl_loss, kl_loss_gradient, softmax
from asutrain.label_dist import entropy

classes = AgeClassSet(1, 101)

# an interior age spreads over five classes, symmetric around the truth
label = gaussian_label_distribution(40, theta=1.0, classes=classes)
print("support around 40:", np.round(label[37:42], 4))

# at the edge of the age range the bump is truncated and renormalized
edge = gaussian_label_distribution(1, classes=classes)
print("support at age 1: ", np.round(edge[:3], 4))

# a larger theta flattens the bump
wide = gaussian_label_distribution(40, theta=4.0, classes=classes)
print("theta=4 around 40:", np.round(wide[37:42], 4))

# untrained logits give the uniform distribution; the loss is then ln(c)
logits = np.zeros(classes.c)
print("loss at uniform:   %.4f  (ln c = %.4f)" % (kl_loss(label, logits), np.log(classes.c)))

# the gradient with respect to the logits is softmax minus label
g = kl_loss_gradient(label, logits)
print("gradient sums to:  %.1e" % g.sum())

# gradient steps on the logits alone drive the loss down to the label entropy
for _ in range(2000):
    logits -= 2.0 * kl_loss_gradient(label, logits)
print("loss after fitting: %.4f  (label entropy %.4f)" % (kl_loss(label, logits), entropy(label)))
print("fitted peak:        %.4f" % softmax(logits)[39])
