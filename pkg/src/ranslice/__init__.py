"""Single-cell RAN slicing simulator with LSTM prediction and DQN slicing control."""

__version__ = "0.1.0"
