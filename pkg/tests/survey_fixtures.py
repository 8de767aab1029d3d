"""Survey posterior summaries used as fixtures for the analysis functionals.

Each profile array has one row per variable (three levels each), values as
published to two decimals, so rows need not sum to exactly one.
"""

import numpy as np

VARIABLES = (
    "V162123",
    "V162134",
    "V162140",
    "V162145",
    "V162148",
    "V162158",
    "V162170",
    "V162176",
    "V162179",
    "V162180",
    "V162192",
    "V162193",
    "V162207",
    "V162208",
    "V162209",
    "V162212",
    "V162214",
    "V162231",
    "V162246",
    "V162260",
    "V162269",
    "V162271",
    "V162290",
)

LIBERAL_PROPORTION = 0.2849
CONSERVATIVE_PROPORTION = 0.1577

LIBERAL = np.array([
    (0.05, 0.20, 0.76),  # V162123
    (0.15, 0.83, 0.02),  # V162134
    (0.99, 0.00, 0.01),  # V162140
    (0.27, 0.12, 0.61),  # V162145
    (0.82, 0.03, 0.15),  # V162148
    (0.00, 0.37, 0.62),  # V162158
    (0.03, 0.13, 0.84),  # V162170
    (0.65, 0.09, 0.26),  # V162176
    (0.80, 0.04, 0.16),  # V162179
    (0.83, 0.01, 0.16),  # V162180
    (0.97, 0.03, 0.00),  # V162192
    (0.88, 0.00, 0.12),  # V162193
    (0.75, 0.07, 0.18),  # V162207
    (0.06, 0.07, 0.87),  # V162208
    (0.95, 0.03, 0.01),  # V162209
    (0.96, 0.02, 0.02),  # V162212
    (0.00, 0.03, 0.97),  # V162214
    (0.85, 0.00, 0.15),  # V162231
    (0.96, 0.03, 0.01),  # V162246
    (0.47, 0.11, 0.41),  # V162260
    (0.00, 0.00, 1.00),  # V162269
    (0.01, 0.49, 0.50),  # V162271
    (0.02, 0.89, 0.09),  # V162290
])

CONSERVATIVE = np.array([
    (0.53, 0.38, 0.09),  # V162123
    (0.49, 0.49, 0.02),  # V162134
    (0.14, 0.52, 0.34),  # V162140
    (0.79, 0.02, 0.19),  # V162145
    (0.01, 0.95, 0.04),  # V162148
    (0.34, 0.63, 0.02),  # V162158
    (0.91, 0.07, 0.02),  # V162170
    (0.35, 0.37, 0.28),  # V162176
    (0.17, 0.64, 0.20),  # V162179
    (0.14, 0.48, 0.37),  # V162180
    (0.07, 0.71, 0.23),  # V162192
    (0.01, 0.80, 0.20),  # V162193
    (0.06, 0.03, 0.91),  # V162207
    (0.98, 0.01, 0.01),  # V162208
    (0.19, 0.19, 0.61),  # V162209
    (0.10, 0.01, 0.89),  # V162212
    (0.84, 0.13, 0.04),  # V162214
    (0.03, 0.63, 0.35),  # V162231
    (0.20, 0.27, 0.53),  # V162246
    (0.65, 0.12, 0.24),  # V162260
    (0.40, 0.31, 0.28),  # V162269
    (0.28, 0.62, 0.10),  # V162271
    (0.19, 0.78, 0.03),  # V162290
])

# posterior means of per-draw cohesion ratio (liberal, conservative) and
# disagreement score
CR_LIBERAL = np.array([0.94, 0.98, 1.00, 0.81, 0.96, 1.00, 0.97, 0.86, 0.95, 0.99, 1.00, 1.00, 0.90, 0.94, 0.99, 0.99, 1.00, 1.00, 0.99, 0.76, 1.00, 0.98, 0.97])
CR_CONSERVATIVE = np.array([0.83, 0.95, 0.72, 0.97, 0.99, 0.96, 0.98, 0.27, 0.74, 0.70, 0.90, 0.99, 0.97, 0.99, 0.71, 0.98, 0.96, 0.96, 0.62, 0.82, 0.32, 0.84, 0.97])
DISAGREEMENT = np.array([1.00, 0.51, 1.00, 1.00, 1.00, 1.00, 1.00, 0.63, 1.00, 1.00, 1.00, 1.00, 1.00, 1.00, 1.00, 1.00, 1.00, 1.00, 1.00, 0.07, 0.97, 0.55, 0.00])

# variables whose disagreement mean is strictly inside (0, 1)
NEAR_TIED = ("V162260", "V162271", "V162134", "V162176", "V162269")

SUB1_PROPORTION = 0.1157
SUB2_PROPORTION = 0.1090
MERGED_PROPORTION = 0.2247

SUB1 = np.array([
    (0.11, 0.21, 0.69),  # V162123
    (0.30, 0.69, 0.00),  # V162134
    (0.97, 0.01, 0.02),  # V162140
    (0.24, 0.10, 0.66),  # V162145
    (0.64, 0.09, 0.27),  # V162148
    (0.00, 0.39, 0.61),  # V162158
    (0.02, 0.11, 0.87),  # V162170
    (0.80, 0.01, 0.19),  # V162176
    (0.69, 0.05, 0.26),  # V162179
    (0.67, 0.01, 0.31),  # V162180
    (0.89, 0.11, 0.00),  # V162192
    (0.78, 0.01, 0.21),  # V162193
    (0.70, 0.07, 0.23),  # V162207
    (0.03, 0.05, 0.93),  # V162208
    (0.96, 0.02, 0.01),  # V162209
    (0.90, 0.01, 0.09),  # V162212
    (0.02, 0.03, 0.95),  # V162214
    (0.71, 0.01, 0.28),  # V162231
    (0.89, 0.06, 0.05),  # V162246
    (0.28, 0.11, 0.61),  # V162260
    (0.00, 0.00, 0.99),  # V162269
    (0.01, 0.44, 0.55),  # V162271
    (0.06, 0.93, 0.01),  # V162290
])

SUB2 = np.array([
    (0.01, 0.17, 0.82),  # V162123
    (0.04, 0.92, 0.04),  # V162134
    (0.98, 0.01, 0.01),  # V162140
    (0.30, 0.13, 0.57),  # V162145
    (0.93, 0.01, 0.05),  # V162148
    (0.00, 0.32, 0.68),  # V162158
    (0.04, 0.12, 0.84),  # V162170
    (0.50, 0.18, 0.31),  # V162176
    (0.92, 0.03, 0.05),  # V162179
    (0.94, 0.01, 0.05),  # V162180
    (0.99, 0.01, 0.00),  # V162192
    (0.94, 0.01, 0.05),  # V162193
    (0.80, 0.08, 0.12),  # V162207
    (0.06, 0.05, 0.89),  # V162208
    (0.93, 0.04, 0.02),  # V162209
    (0.97, 0.02, 0.01),  # V162212
    (0.01, 0.03, 0.96),  # V162214
    (0.93, 0.01, 0.06),  # V162231
    (0.98, 0.01, 0.01),  # V162246
    (0.65, 0.10, 0.25),  # V162260
    (0.01, 0.01, 0.99),  # V162269
    (0.01, 0.48, 0.50),  # V162271
    (0.01, 0.82, 0.17),  # V162290
])

MERGED = np.array([
    (0.06, 0.19, 0.75),  # V162123
    (0.17, 0.80, 0.02),  # V162134
    (0.98, 0.01, 0.02),  # V162140
    (0.27, 0.11, 0.62),  # V162145
    (0.78, 0.05, 0.16),  # V162148
    (0.00, 0.36, 0.64),  # V162158
    (0.03, 0.12, 0.85),  # V162170
    (0.66, 0.10, 0.25),  # V162176
    (0.80, 0.04, 0.16),  # V162179
    (0.80, 0.01, 0.19),  # V162180
    (0.94, 0.06, 0.00),  # V162192
    (0.86, 0.01, 0.13),  # V162193
    (0.75, 0.07, 0.18),  # V162207
    (0.05, 0.05, 0.91),  # V162208
    (0.95, 0.03, 0.02),  # V162209
    (0.93, 0.02, 0.05),  # V162212
    (0.01, 0.03, 0.95),  # V162214
    (0.82, 0.01, 0.17),  # V162231
    (0.93, 0.04, 0.03),  # V162246
    (0.46, 0.11, 0.43),  # V162260
    (0.00, 0.00, 0.99),  # V162269
    (0.01, 0.46, 0.53),  # V162271
    (0.04, 0.88, 0.09),  # V162290
])
