"""liqlab: liquidity-crisis order-book models at desk scale.

Event-driven simulators (order book with cancellation feedback; linear,
stabilized, quadratic and price-feedback spread models), matching
closed-form oracles, and the estimators needed to verify their phase
structure: survival functions, susceptibility, finite-size scaling, and the
liquidity-flux regression.
"""

__version__ = "0.1.0"

from . import analysis, santafe, spread, stochastic, synthetic, theory

__all__ = ["analysis", "santafe", "spread", "stochastic", "synthetic", "theory", "__version__"]
