# QNSCD Simulator
