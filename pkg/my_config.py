import os
from dotenv import load_dotenv

load_dotenv()

## Configuration
class MyConfig:
    pass

MY_CONFIG = MyConfig ()

## Directories
MY_CONFIG.WORKSPACE_DIR = os.getenv("RGO_WORKSPACE_DIR", os.path.join('workspace'))
MY_CONFIG.SAMPLES_DIR = os.path.join( MY_CONFIG.WORKSPACE_DIR, "samples")
MY_CONFIG.REPORTS_DIR = os.path.join( MY_CONFIG.WORKSPACE_DIR, "reports")

## Parallelism: chains fan out over this many worker threads
MY_CONFIG.NUM_WORKERS = int(os.getenv("RGO_WORKERS", "1"))
MY_CONFIG.LOG_LEVEL = os.getenv("RGO_LOG_LEVEL", "WARNING")

## Randomness
MY_CONFIG.DEFAULT_SEED = int(os.getenv("RGO_DEFAULT_SEED", "20240601"))
MY_CONFIG.OPTIMIZER_STREAM = 104729   # child stream used by svrg

## Reduction framework
MY_CONFIG.ITERATION_CONSTANT = 4.0    # c in T = c/(eta mu) log(log(beta)/eps)

## XSample / YSample rejection loops
MY_CONFIG.MAX_REJECTION_ROUNDS = 1000
MY_CONFIG.ACCEPT_RATIO_SLACK = 1e-9   # relative slack when asserting acceptance ratio <= 1

## Metropolized fallback (MALA)
MY_CONFIG.FALLBACK_STEP_CONSTANT = 0.1    # h = c_h / (L_target d)
MY_CONFIG.FALLBACK_STEPS_CONSTANT = 10.0  # steps = c * d * log(d / tv_tol)
MY_CONFIG.FALLBACK_ARGMIN_ITERS = 50

## Composite sampler
MY_CONFIG.JOINT_K_CONSTANT = 100.0        # C_K; the worst-case analysis constant is 2**26 * 100
MY_CONFIG.ACCEPT_CONSTANT = 4.0           # C in the approximate rejection step
MY_CONFIG.MAX_ACCEPT_ROUNDS = 64

## Finite-sum sampler, Theta-constants
MY_CONFIG.MRW_STEP_CONSTANT = 1.0         # 1/h = c_h L kappa d log^2(n kappa d / eps)
MY_CONFIG.MRW_ITER_CONSTANT = 1.0         # K = c_K kappa^2 d log^3(n kappa d / eps)
MY_CONFIG.MRW_RADIUS_CONSTANT = 1.0       # R_Omega = c_R sqrt(d log(kappa/eps) / mu)
MY_CONFIG.MRW_MAX_GUARD_EVENTS = 100
MY_CONFIG.EXACT_MRW_STEP_CONSTANT = 1.0   # exact-filter walk: h = 1 / (c L kappa d)
MY_CONFIG.EXACT_MRW_ITER_CONSTANT = 1.0   # exact-filter walk: K = c kappa^2 d log(kappa d / eps)

## Optimization
MY_CONFIG.OPT_TOL_SCALE = 1e-8            # tol = scale * sqrt(L)
MY_CONFIG.OPT_MAX_ITER = 100000
MY_CONFIG.SVRG_EPOCH_CONSTANT = 2.0       # epoch length = c * kappa
MY_CONFIG.SVRG_STEP_CONSTANT = 0.1        # step = c / L
MY_CONFIG.SVRG_MAX_EPOCHS = 500

## Quadrature
MY_CONFIG.QUADRATURE_NODES = 4001
MY_CONFIG.QUADRATURE_NODES_2D = 401

## Validation
MY_CONFIG.ALPHA = 0.01
MY_CONFIG.FAMILY_ALPHA = 0.05
MY_CONFIG.RESEED_OFFSET = 1000003
MY_CONFIG.PERMUTATIONS = 500
MY_CONFIG.ENERGY_MAX_POINTS = 500
MY_CONFIG.SUITE_DRAWS = int(os.getenv("RGO_SUITE_DRAWS", "100000"))
MY_CONFIG.SUITE_CALLS = int(os.getenv("RGO_SUITE_CALLS", "10000"))
MY_CONFIG.SUITE_CHAINS = int(os.getenv("RGO_SUITE_CHAINS", "2000"))
MY_CONFIG.COUPLED_RUNS = int(os.getenv("RGO_COUPLED_RUNS", "1000"))
