(function() { var event = document.createEvent('Event');  
    event.initEvent('fbPlatformDialogMustClose',  true,true); 
    document.dispatchEvent(event);
})();
