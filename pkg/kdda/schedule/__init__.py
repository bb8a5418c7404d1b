from kdda.schedule.beta import (
    PER_BATCH,
    PER_EPOCH,
    UPDATE_MODES,
    BetaSchedule,
    ScheduleError,
    beta_at,
    growth_rate,
)
