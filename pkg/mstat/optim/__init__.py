from mstat.optim._sgd import Sgd, StepSchedule
