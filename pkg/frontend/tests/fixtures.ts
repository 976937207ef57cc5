// Frozen responses captured from the dashboard API over the demo run
// (2 meshes x 2 environments x a 3x2 grid, 24 records).

import type { HeatmapResponse, ParamsResponse, RecordsResponse } from "../src/types.js";

export const paramsFixture: ParamsResponse = {
  "params": [
    {
      "hi": 0.8,
      "kind": "continuous",
      "lo": -0.8,
      "name": "orientation.yaw",
      "record_field": false,
      "values": [
        -0.8,
        0.0,
        0.8
      ]
    },
    {
      "kind": "discrete",
      "name": "texture_swap.texture",
      "record_field": false,
      "values": [
        "original",
        "green"
      ]
    },
    {
      "kind": "discrete",
      "name": "mesh",
      "record_field": true,
      "values": [
        "cube_blue",
        "cube_red"
      ]
    },
    {
      "kind": "discrete",
      "name": "environment",
      "record_field": true,
      "values": [
        "studio_dark",
        "studio_gray"
      ]
    }
  ],
  "run": "demo"
} as ParamsResponse;

export const heatmapFixture: HeatmapResponse = {
  "cells": [
    [
      {
        "accuracy": 0.0,
        "correct": 0,
        "n": 4
      },
      {
        "accuracy": 0.0,
        "correct": 0,
        "n": 4
      },
      {
        "accuracy": 0.0,
        "correct": 0,
        "n": 4
      }
    ],
    [
      {
        "accuracy": 1.0,
        "correct": 4,
        "n": 4
      },
      {
        "accuracy": 1.0,
        "correct": 4,
        "n": 4
      },
      {
        "accuracy": 1.0,
        "correct": 4,
        "n": 4
      }
    ]
  ],
  "x_key": "orientation.yaw",
  "x_values": [
    -0.8,
    0.0,
    0.8
  ],
  "y_key": "texture_swap.texture",
  "y_values": [
    "green",
    "original"
  ]
};

// the same two axes with mesh pinned to cube_red by a slider
export const heatmapSliderFixture: HeatmapResponse = {
  "cells": [
    [
      {
        "accuracy": 0.0,
        "correct": 0,
        "n": 2
      },
      {
        "accuracy": 0.0,
        "correct": 0,
        "n": 2
      },
      {
        "accuracy": 0.0,
        "correct": 0,
        "n": 2
      }
    ],
    [
      {
        "accuracy": 1.0,
        "correct": 2,
        "n": 2
      },
      {
        "accuracy": 1.0,
        "correct": 2,
        "n": 2
      },
      {
        "accuracy": 1.0,
        "correct": 2,
        "n": 2
      }
    ]
  ],
  "x_key": "orientation.yaw",
  "x_values": [
    -0.8,
    0.0,
    0.8
  ],
  "y_key": "texture_swap.texture",
  "y_values": [
    "green",
    "original"
  ]
};

export const recordsCell00Fixture: RecordsResponse = {
  "n": 4,
  "records": [
    {
      "buffers": {
        "rgb": "buffers/4/rgb.png",
        "uv": "buffers/4/uv.npy"
      },
      "environment": "studio_gray",
      "id": 4,
      "is_correct": false,
      "mesh": "cube_red",
      "prediction": {
        "task": "classification",
        "top1": 1,
        "top1_label": "green",
        "top1_score": -0.40743869942388194
      },
      "values": {
        "orientation.pitch": 0.4,
        "orientation.roll": 0.0,
        "orientation.yaw": -0.8,
        "texture_swap.texture": "green"
      }
    },
    {
      "buffers": {
        "rgb": "buffers/5/rgb.png",
        "uv": "buffers/5/uv.npy"
      },
      "environment": "studio_gray",
      "id": 5,
      "is_correct": false,
      "mesh": "cube_blue",
      "prediction": {
        "task": "classification",
        "top1": 1,
        "top1_label": "green",
        "top1_score": -0.40743869942388194
      },
      "values": {
        "orientation.pitch": 0.4,
        "orientation.roll": 0.0,
        "orientation.yaw": -0.8,
        "texture_swap.texture": "green"
      }
    },
    {
      "buffers": {
        "rgb": "buffers/6/rgb.png",
        "uv": "buffers/6/uv.npy"
      },
      "environment": "studio_dark",
      "id": 6,
      "is_correct": false,
      "mesh": "cube_red",
      "prediction": {
        "task": "classification",
        "top1": 1,
        "top1_label": "green",
        "top1_score": -0.509156872391889
      },
      "values": {
        "orientation.pitch": 0.4,
        "orientation.roll": 0.0,
        "orientation.yaw": -0.8,
        "texture_swap.texture": "green"
      }
    },
    {
      "buffers": {
        "rgb": "buffers/7/rgb.png",
        "uv": "buffers/7/uv.npy"
      },
      "environment": "studio_dark",
      "id": 7,
      "is_correct": false,
      "mesh": "cube_blue",
      "prediction": {
        "task": "classification",
        "top1": 1,
        "top1_label": "green",
        "top1_score": -0.509156872391889
      },
      "values": {
        "orientation.pitch": 0.4,
        "orientation.roll": 0.0,
        "orientation.yaw": -0.8,
        "texture_swap.texture": "green"
      }
    }
  ],
  "x_value": -0.8,
  "y_value": "green"
};
