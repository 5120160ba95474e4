"""Independent reference implementations used to freeze expected values.

Everything here is written the slow, textbook way on purpose: two-pass
moments, per-term score evaluation in plain loops, a nearest-mean
classifier.  None of it shares code with the package under test.
"""

import math

import numpy as np


def two_pass_stats(features):
    """Textbook two-pass population mean and covariance."""
    x = np.asarray(features, dtype=np.float64)
    n = x.shape[0]
    mean = x.sum(axis=0) / n
    centered = x - mean
    cov = centered.T @ centered / n
    return mean, cov


def two_pass_mean_std(values):
    """Two-pass mean and population standard deviation."""
    v = np.asarray(values, dtype=np.float64)
    mean = v.sum() / v.size
    var = ((v - mean) ** 2).sum() / v.size
    return mean, math.sqrt(var)


def softmax_log_prob(weights, biases, h, token):
    """Plain log softmax probability of one token."""
    logits = [float(np.dot(w, h)) + float(b) for w, b in zip(weights, biases)]
    m = max(logits)
    total = sum(math.exp(v - m) for v in logits)
    return logits[token] - (m + math.log(total))

def ida_score_reference(weights, biases, h, mean, cov, lam, candidate, cols=None):
    """Direct per-term evaluation of the augmented inverse-probability score.

    log sum_k exp( lam*dw.mu + (lam/2)*dw.Sigma.dw + dw.h + db ),
    dw = w_k - w_y, db = b_k - b_y, summed over tokens in cols
    (default: the whole vocabulary).
    """
    weights = np.asarray(weights, dtype=np.float64)
    biases = np.asarray(biases, dtype=np.float64)
    h = np.asarray(h, dtype=np.float64)
    mean = np.asarray(mean, dtype=np.float64)
    cov = np.asarray(cov, dtype=np.float64)
    if cols is None:
        cols = range(weights.shape[0])
    wy = weights[candidate]
    by = biases[candidate]
    terms = []
    for k in cols:
        dw = weights[k] - wy
        db = biases[k] - by
        t = lam * float(dw @ mean) + 0.5 * lam * float(dw @ cov @ dw)
        t += float(dw @ h) + float(db)
        terms.append(t)
    m = max(terms)
    return m + math.log(sum(math.exp(t - m) for t in terms))


def nearest_mean_predict(features, class_means):
    """Classify each row by the closest class mean (Euclidean)."""
    x = np.asarray(features, dtype=np.float64)
    means = np.asarray(class_means, dtype=np.float64)
    d2 = ((x[:, None, :] - means[None, :, :]) ** 2).sum(axis=2)
    return d2.argmin(axis=1)


def confusion_reference(preds, truths, num_classes):
    """Loop-built confusion matrix, rows = truth."""
    c = np.zeros((num_classes, num_classes), dtype=np.int64)
    for p, t in zip(preds, truths):
        c[t, p] += 1
    return c
