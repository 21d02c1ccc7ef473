from optim.optimizers import Adam, Optimizer, SGDMomentum, adam_step, build_optimizer, sgd_momentum_step
from optim.policy import PRESETS, TrainPolicy
from optim.schedules import LRSchedule, cosine_lr, multistep_lr
