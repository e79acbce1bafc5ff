// test images
