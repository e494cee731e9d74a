"""The min-max objective and the pairwise square loss agree.

For fixed scores the inner problem over (a, b, alpha) has a closed form.
At the empirical class ratio its value is an affine function of the mean
pairwise square loss, which is what makes the min-max form usable with
one sample at a time.
"""

import numpy as np

from fedmax import ObjectiveContext, closed_form_inner, pairwise_auc_square_loss

rng = np.random.default_rng(0)
labels = np.where(rng.random(40) < 0.25, 1, -1)
scores = rng.normal(size=40) + 0.8 * (labels == 1)
p = float(np.mean(labels == 1))

sol = closed_form_inner(ObjectiveContext(p), labels, scores)
pairwise = pairwise_auc_square_loss(labels, scores)

print(f"positive ratio p = {p:.3f}")
print(f"a* = {sol.a_star:+.4f} (mean positive score)")
print(f"b* = {sol.b_star:+.4f} (mean negative score)")
print(f"alpha* = {sol.alpha_star:+.4f} = b* - a*")
print(f"saddle value                  {sol.value:+.10f}")
print(f"p(1-p) * pairwise - p(1-p)    {p * (1 - p) * pairwise - p * (1 - p):+.10f}")
