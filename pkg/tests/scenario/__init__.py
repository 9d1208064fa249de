# Scenario harness tests package
