"""Source and target domains: Gaussian class blobs and a rigid shift."""
# %%
import numpy as np

from softshift import SeededRng, ShiftConfig, bayes_accuracy, confusability, generate_domain_pair

for shift in (0.0, 1.0, 4.0):
    pair = generate_domain_pair(ShiftConfig(shift=shift), SeededRng(0))
    src, tgt = pair.source["train"], pair.target["train"]
    gap = np.linalg.norm(pair.geometry.target_means(pair.cfg) - pair.geometry.means, axis=1).mean()
    print(f"shift={shift}: source train {src.features.shape}, target train {tgt.features.shape}, "
          f"mean displacement {gap:.2f}, target Bayes accuracy {bayes_accuracy(pair):.3f}")

# %% the class geometry is shared by both domains; nearby blobs are easy to confuse
w = confusability(pair.geometry.means, pair.cfg.blob_std)
print("most confusable partner of each class:", w.argmax(axis=1))

# %% parallel pairs: one latent draw seen through both domains
par = pair.parallel
print(len(par), "pairs; labels agree with target train:", np.array_equal(par.labels, tgt.labels))

# %% label noise swaps labels between confusable classes, target train only
noisy = generate_domain_pair(ShiftConfig(shift=4.0, label_noise=0.2), SeededRng(0))
print("changed labels:", np.mean(noisy.target["train"].labels != tgt.labels))
