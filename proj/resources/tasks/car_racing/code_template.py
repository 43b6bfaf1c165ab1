import numpy as np
import cv2
def choose_action(observation, car_speed, pre_action, pre_observation):
    """
    Determine the next action for the Car Racing agent.
    This function takes into account the current state (observation and speed), the previous action, and the previous observation.
    Notes:
    - The car in this environment is a powerful rear-wheel-drive vehicle. Avoid accelerating while turning sharply,
      as this can easily lead to loss of control.
    - Occasionally, track segments (e.g., after a U-turn) may appear in the observation but are not part of the immediate drivable path. These should be distinguished to avoid premature or incorrect decisions.
    - Avoid coming to a complete stop, as this may prevent the car from finishing the race.
    Args:
        observation (np.ndarray): The current state observed by the agent, represented as a 96x96 RGB image of the car and race track from a top-down view (shape: (96, 96, 3)).
        car_speed (float): The current speed of the car.
        pre_action (np.ndarray): The action taken by the car in the previous step, represented as a 3-element array.
        pre_observation (np.ndarray): The observation received when the previous action was taken. It has the same shape and format as `observation` (i.e., a 96x96 RGB image).
    Returns:
        np.ndarray: The action selected by the agent for the next step, represented as an array of shape (3,) where:
                    - Index 0: Steering, where -1 is full left, +1 is full right (range: [-1, 1]).
                    - Index 1: Gas, (range: [0, 1]).
                    - Index 2: Braking, (range: [0, 1]).
    """
    action = np.array([0.0, 0.0, 0.0])
    # Gray track detection parameters (RGB 95-115 range with +-5
    gray_low = 95
    gray_high = 115

    # Create 3D gray detection mask (all RGB channels within range)
    gray_mask = (
            (observation[:, :, 0] >= gray_low) & (observation[:, :, 0] <= gray_high) &
            (observation[:, :, 1] >= gray_low) & (observation[:, :, 1] <= gray_high) &
            (observation[:, :, 2] >= gray_low) & (observation[:, :, 2] <= gray_high)
    )

    gray_indices = np.argwhere(gray_mask)
    center_x = np.mean(gray_indices[:, 1]) if len(gray_indices) > 0 else observation.shape[1] // 2
    car_position = observation.shape[1] // 2
    offset = center_x - car_position

    steering_angle = np.clip(offset / 100.0, -1.0, 1.0)
    action[0] = steering_angle

    if abs(offset) > 10:
        action[1] = 0.0
        action[2] = 0.2
    else:
        action[1] = 0.8
        action[2] = 0.0

    gray_density = np.sum(gray_mask) / (observation.shape[0] * observation.shape[1])
    if gray_density < 0.1:
        action[1] = 0.4
        action[2] = 0.3
    return action
