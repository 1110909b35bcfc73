from hypothesis import HealthCheck, settings

# Property tests run whole protocol simulations inside strategies; the default
# 200ms deadline and the too-slow health check only add flakiness there.
settings.register_profile(
    "suite",
    deadline=None,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("suite")
